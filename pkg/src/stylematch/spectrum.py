"""Frequency-domain machinery: 2-D DCT low-pass loss and RAPSD curves.

The regularizer compares DCT coefficients of two images inside a timestep
dependent low-pass band:

    L_freq(z_tgt, z_src; t) = sum( M_thld(t) * (DCT(z_tgt) - DCT(z_src)) )^2

with M a binary radial retention mask over DCT indices and thld(t) =
min(t / t_ref, 1). Both transforms are orthonormal, so Parseval holds and the
gradient w.r.t. z_tgt is simply 2 * IDCT(M * diff).

RAPSD (radially averaged power spectral density) is computed from the shifted
Fourier periodogram with annular bins one index wide, DC excluded; per-channel
curves are averaged. It quantifies the high-frequency gap between corpora.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from .errors import ParameterError, ShapeError
from .schedule import NoiseSchedule

SQRT2 = float(np.sqrt(2.0))


def dct2(x: np.ndarray) -> np.ndarray:
    """Orthonormal type-II DCT over the two leading (spatial) axes."""
    return dctn(x, type=2, norm="ortho", axes=(0, 1))


def idct2(c: np.ndarray) -> np.ndarray:
    """Inverse of dct2 (orthonormal type-III)."""
    return idctn(c, type=2, norm="ortho", axes=(0, 1))


def thld_of_t(t: int, t_ref: int) -> float:
    """Low-pass cutoff fraction for timestep t: min(t / t_ref, 1)."""
    if t < 0:
        raise ParameterError(f"t must be >= 0, got {t}")
    if t_ref <= 0:
        raise ParameterError(f"t_ref must be > 0, got {t_ref}")
    return min(float(t) / float(t_ref), 1.0)


@dataclass(frozen=True)
class SpectrumMask:
    """Binary retention mask over H x W DCT coefficients."""

    height: int
    width: int
    thld: float
    mask: np.ndarray  # (H, W) in {0, 1}


def _radial_index(h: int, w: int) -> np.ndarray:
    i = np.arange(h, dtype=np.float64)[:, None] / h
    j = np.arange(w, dtype=np.float64)[None, :] / w
    return np.sqrt(i * i + j * j)


def lpf_mask(h: int, w: int, thld: float, soft: bool = False) -> SpectrumMask:
    """Radial low-pass mask: keep (i, j) iff sqrt((i/h)^2 + (j/w)^2) <= thld * sqrt(2).

    thld=0 keeps only the DC coefficient, thld=1 keeps everything. `soft`
    swaps the hard cutoff for a raised-cosine roll-off over the outer 20% of
    the radius (DC still exactly 1); used only for artifact-sensitivity
    ablations, never in the default loss.
    """
    if not (0.0 <= thld <= 1.0):
        raise ParameterError(f"thld must be in [0,1], got {thld}")
    if h < 1 or w < 1:
        raise ParameterError(f"mask dims must be positive, got {h}x{w}")
    r = _radial_index(h, w)
    cut = thld * SQRT2
    if not soft:
        m = (r <= cut).astype(np.float64)
    else:
        lo = 0.8 * cut
        m = np.ones((h, w))
        if cut > 0:
            ramp = np.clip((r - lo) / max(cut - lo, 1e-12), 0.0, 1.0)
            m = 0.5 * (1.0 + np.cos(np.pi * ramp))
            m[r <= lo] = 1.0
            m[r > cut] = 0.0
        else:
            m[:] = 0.0
        m[0, 0] = 1.0
    m[0, 0] = 1.0  # DC always retained
    return SpectrumMask(height=h, width=w, thld=float(thld), mask=m)


def freq_loss(
    z_tgt: np.ndarray,
    z_src: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    t_ref: int = 500,
    thld_mode: str = "increasing",
    soft: bool = False,
) -> tuple[float, np.ndarray]:
    """Masked DCT squared error and its gradient w.r.t. z_tgt.

    thld_mode selects how the cutoff tracks t: "increasing" (the definition
    thld(t) = t / t_ref) or "inverted" (1 - that), kept as a comparison path
    for the opposite reading; no claim is made about which was intended
    upstream. At thld=1 the loss equals the plain squared error by Parseval.
    """
    z_tgt = np.asarray(z_tgt, dtype=np.float64)
    z_src = np.asarray(z_src, dtype=np.float64)
    if z_tgt.shape != z_src.shape:
        raise ShapeError(f"z_tgt {z_tgt.shape} vs z_src {z_src.shape}")
    if z_tgt.ndim not in (2, 3):
        raise ShapeError(f"expected HW or HWC, got {z_tgt.shape}")
    if t < 0 or t > sched.T:
        raise ParameterError(f"t={t} outside schedule range [0, {sched.T}]")
    thld = thld_of_t(t, t_ref)
    if thld_mode == "inverted":
        thld = 1.0 - thld
    elif thld_mode != "increasing":
        raise ParameterError(f"unknown thld_mode {thld_mode!r}")
    m = lpf_mask(z_tgt.shape[0], z_tgt.shape[1], thld, soft=soft).mask
    if z_tgt.ndim == 3:
        m = m[:, :, None]
    diff = m * (dct2(z_tgt) - dct2(z_src))
    loss = float(np.sum(diff * diff))
    # d/dz_tgt sum (M (C z_tgt - C z_src))^2 = 2 C^T (M^2 diff); M binary, C orthonormal.
    grad = 2.0 * idct2(m * diff)
    return loss, grad


def dct_band_rel_l2(z_out: np.ndarray, z_src: np.ndarray, thld: float) -> float:
    """Relative L2 distance between two images inside a DCT low-pass band.

    ||M (C z_out - C z_src)|| / ||M C z_src||; the content-preservation
    metric used by the acceptance checks at thld=0.2.
    """
    z_out = np.asarray(z_out, dtype=np.float64)
    z_src = np.asarray(z_src, dtype=np.float64)
    if z_out.shape != z_src.shape:
        raise ShapeError(f"shape mismatch {z_out.shape} vs {z_src.shape}")
    m = lpf_mask(z_out.shape[0], z_out.shape[1], thld).mask
    if z_out.ndim == 3:
        m = m[:, :, None]
    num = np.linalg.norm(m * (dct2(z_out) - dct2(z_src)))
    den = np.linalg.norm(m * dct2(z_src))
    if den < 1e-12:
        raise ParameterError("source image has no energy in the requested band")
    return float(num / den)


@dataclass(frozen=True)
class RapsdCurve:
    """Radially averaged power spectral density: mean power per annular bin."""

    freqs: np.ndarray  # strictly increasing, in [0, 0.5*sqrt(2)]
    power: np.ndarray  # >= 0, same length

    def __post_init__(self):
        if self.freqs.shape != self.power.shape or self.freqs.ndim != 1:
            raise ShapeError("freqs/power must be matching 1-D arrays")
        if np.any(np.diff(self.freqs) <= 0):
            raise ParameterError("frequencies must be strictly increasing")
        if np.any(self.power < 0):
            raise ParameterError("powers must be nonnegative")


def rapsd(x: np.ndarray) -> RapsdCurve:
    """RAPSD of an HW or HWC image.

    Periodogram |FFT2|^2 / (H*W), annular bins of width one index (1/max(h,w)
    in normalized frequency), DC excluded; channels averaged after binning.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ShapeError(f"expected HW or HWC, got {x.shape}")
    h, w, _ = x.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    r = np.sqrt(fy * fy + fx * fx)
    binw = 1.0 / max(h, w)
    idx = np.round(r / binw).astype(np.int64)
    nbins = int(idx.max()) + 1
    flat_idx = idx.ravel()
    dc = r.ravel() == 0.0
    counts = np.bincount(flat_idx[~dc], minlength=nbins).astype(np.float64)
    power_acc = np.zeros(nbins)
    for c in range(x.shape[2]):
        p = np.abs(np.fft.fft2(x[:, :, c])) ** 2 / (h * w)
        power_acc += np.bincount(flat_idx[~dc], weights=p.ravel()[~dc], minlength=nbins)
    keep = counts > 0
    freqs = np.arange(nbins, dtype=np.float64)[keep] * binw
    # the last bin center can round past the true maximum frequency; clamp so
    # curve labels stay inside [0, max radial frequency]
    freqs = np.minimum(freqs, float(r.max()))
    power = power_acc[keep] / (counts[keep] * x.shape[2])
    return RapsdCurve(freqs=freqs, power=power)


def band_power(curve: RapsdCurve, f_lo: float, f_hi: float) -> float:
    """Mean RAPSD power over bins with f_lo <= freq <= f_hi."""
    sel = (curve.freqs >= f_lo) & (curve.freqs <= f_hi)
    if not np.any(sel):
        raise ParameterError(f"no RAPSD bins in [{f_lo}, {f_hi}]")
    return float(np.mean(curve.power[sel]))


def high_band_power(curve: RapsdCurve, frac: float = 0.75) -> float:
    """Mean power over the top (1-frac) fraction of the frequency axis."""
    fmax = float(curve.freqs[-1])
    return band_power(curve, frac * fmax, fmax)


def mean_rapsd(images) -> RapsdCurve:
    """Average RAPSD over an iterable of same-sized images."""
    curves = [rapsd(im) for im in images]
    if not curves:
        raise ParameterError("need at least one image")
    f0 = curves[0].freqs
    for c in curves[1:]:
        if c.freqs.shape != f0.shape or np.any(c.freqs != f0):
            raise ShapeError("RAPSD curves disagree on binning; images must share a size")
    return RapsdCurve(freqs=f0, power=np.mean([c.power for c in curves], axis=0))
