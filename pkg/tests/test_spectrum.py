"""DCT transforms, low-pass masks, the frequency loss, and RAPSD."""

import numpy as np
import pytest
from scipy import ndimage

from stylematch.errors import ParameterError, ShapeError
from stylematch.rng import make_rng
from stylematch.spectrum import (
    RapsdCurve,
    band_power,
    dct2,
    dct_band_rel_l2,
    freq_loss,
    high_band_power,
    idct2,
    lpf_mask,
    mean_rapsd,
    rapsd,
    thld_of_t,
)


def _dct1_bruteforce(x: np.ndarray) -> np.ndarray:
    """Orthonormal type-II DCT along axis 0 by the defining double sum."""
    n = x.shape[0]
    out = np.zeros_like(x, dtype=np.float64)
    for k in range(n):
        s = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
        basis = np.cos(np.pi * (2 * np.arange(n) + 1) * k / (2 * n))
        out[k] = s * np.tensordot(basis, x, axes=(0, 0))
    return out


def _idct1_bruteforce(c: np.ndarray) -> np.ndarray:
    n = c.shape[0]
    out = np.zeros_like(c, dtype=np.float64)
    for x_i in range(n):
        acc = np.sqrt(1.0 / n) * c[0]
        for k in range(1, n):
            acc = acc + np.sqrt(2.0 / n) * c[k] * np.cos(np.pi * (2 * x_i + 1) * k / (2 * n))
        out[x_i] = acc
    return out


# ----------------------------------------------------------------- transforms


def test_dct2_constant_image_dc_only():
    c = 0.37
    x = np.full((16, 12, 3), c)
    coef = dct2(x)
    assert np.allclose(coef[0, 0], c * np.sqrt(16 * 12), atol=1e-12)
    coef[0, 0] = 0
    assert np.max(np.abs(coef)) < 1e-12


def test_dct2_matches_bruteforce_definition():
    rng = make_rng(3, 0)
    x = rng.standard_normal((4, 4))
    ref = _dct1_bruteforce(_dct1_bruteforce(x).T).T
    assert np.max(np.abs(dct2(x) - ref)) < 1e-10


def test_idct2_matches_bruteforce_definition():
    rng = make_rng(3, 1)
    c = rng.standard_normal((4, 4))
    ref = _idct1_bruteforce(_idct1_bruteforce(c).T).T
    assert np.max(np.abs(idct2(c) - ref)) < 1e-10


def test_dct2_parseval():
    rng = make_rng(3, 2)
    x = rng.standard_normal((32, 24, 3))
    assert abs(np.sum(x * x) - np.sum(dct2(x) ** 2)) / np.sum(x * x) < 1e-9


def test_roundtrip():
    rng = make_rng(3, 3)
    for shape in ((64, 64, 3), (17, 31), (8, 8, 1)):
        x = rng.standard_normal(shape)
        assert np.linalg.norm(idct2(dct2(x)) - x) / np.linalg.norm(x) < 1e-9


def test_idct2_dc_only_gives_constant():
    c = np.zeros((10, 10))
    c[0, 0] = 5.0
    x = idct2(c)
    assert np.allclose(x, 5.0 / np.sqrt(100), atol=1e-12)


# ------------------------------------------------------------------ threshold


def test_thld_of_t_values():
    assert thld_of_t(500, 500) == 1.0
    assert thld_of_t(0, 500) == 0.0
    assert thld_of_t(250, 500) == 0.5
    assert thld_of_t(900, 500) == 1.0  # clamped


def test_thld_of_t_validation():
    with pytest.raises(ParameterError):
        thld_of_t(-1, 500)
    with pytest.raises(ParameterError):
        thld_of_t(10, 0)


# ----------------------------------------------------------------------- mask


def test_lpf_mask_extremes():
    full = lpf_mask(32, 32, 1.0).mask
    assert np.all(full == 1.0)
    dc = lpf_mask(32, 32, 0.0).mask
    assert dc[0, 0] == 1.0 and dc.sum() == 1.0


def test_lpf_mask_monotone_nesting():
    prev = lpf_mask(64, 64, 0.0).mask
    for thld in np.arange(0.1, 1.0, 0.1):
        cur = lpf_mask(64, 64, float(thld)).mask
        assert np.all(cur >= prev), f"nesting broken at {thld}"
        assert cur.sum() > prev.sum()
        prev = cur


def test_lpf_mask_binary_and_dc():
    m = lpf_mask(48, 16, 0.3)
    assert set(np.unique(m.mask)) <= {0.0, 1.0}
    assert m.mask[0, 0] == 1.0
    assert m.thld == 0.3


def test_lpf_mask_soft_variant():
    m = lpf_mask(64, 64, 0.4, soft=True).mask
    assert m[0, 0] == 1.0
    assert np.all((m >= 0) & (m <= 1))
    hard = lpf_mask(64, 64, 0.4).mask
    assert np.all(m[hard == 0] == 0)  # no leakage beyond the hard cutoff


def test_lpf_mask_validation():
    with pytest.raises(ParameterError):
        lpf_mask(8, 8, 1.5)
    with pytest.raises(ParameterError):
        lpf_mask(0, 8, 0.5)


# ------------------------------------------------------------------ freq loss


def test_freq_loss_identical_inputs(sched):
    x = make_rng(3, 4).standard_normal((16, 16, 3))
    loss, grad = freq_loss(x, x.copy(), 300, sched)
    assert loss == 0.0
    assert np.all(grad == 0)


def test_freq_loss_full_band_is_plain_l2(sched):
    rng = make_rng(3, 5)
    a, b = rng.standard_normal((2, 12, 12, 3))
    loss, _ = freq_loss(a, b, 500, sched, t_ref=500)
    assert np.isclose(loss, np.sum((a - b) ** 2), rtol=1e-12)


def test_freq_loss_gradient_fd(sched):
    rng = make_rng(3, 6)
    z_tgt = rng.standard_normal((6, 6, 2))
    z_src = rng.standard_normal((6, 6, 2))
    t = 240
    _, grad = freq_loss(z_tgt, z_src, t, sched)
    h = 1e-6
    fd = np.zeros_like(grad)
    for i in range(z_tgt.size):
        zp, zm = z_tgt.ravel().copy(), z_tgt.ravel().copy()
        zp[i] += h
        zm[i] -= h
        lp, _ = freq_loss(zp.reshape(z_tgt.shape), z_src, t, sched)
        lm, _ = freq_loss(zm.reshape(z_tgt.shape), z_src, t, sched)
        fd.ravel()[i] = (lp - lm) / (2 * h)
    assert np.linalg.norm(fd - grad) / np.linalg.norm(fd) < 1e-6


def test_freq_loss_symmetry_and_grad_antisymmetry(sched):
    rng = make_rng(3, 7)
    a, b = rng.standard_normal((2, 10, 10, 3))
    t = 350
    la, ga = freq_loss(a, b, t, sched)
    lb, gb = freq_loss(b, a, t, sched)
    assert np.isclose(la, lb, rtol=1e-12)
    assert np.allclose(ga, -gb, atol=1e-12)


def test_freq_loss_monotone_in_retained_band(sched):
    rng = make_rng(3, 8)
    a, b = rng.standard_normal((2, 24, 24, 3))
    losses = [freq_loss(a, b, t, sched, t_ref=500)[0] for t in range(0, 501, 50)]
    diffs = np.diff(losses)
    assert np.all(diffs >= 0)
    assert np.any(diffs > 0)


def test_freq_loss_inverted_mode(sched):
    rng = make_rng(3, 9)
    a, b = rng.standard_normal((2, 8, 8, 3))
    l_inv0, _ = freq_loss(a, b, 0, sched, t_ref=500, thld_mode="inverted")
    l_full, _ = freq_loss(a, b, 500, sched, t_ref=500)
    assert np.isclose(l_inv0, l_full, rtol=1e-12)
    with pytest.raises(ParameterError):
        freq_loss(a, b, 100, sched, thld_mode="sideways")


def test_freq_loss_validation(sched):
    a = np.zeros((8, 8, 3))
    with pytest.raises(ShapeError):
        freq_loss(a, np.zeros((8, 9, 3)), 100, sched)
    with pytest.raises(ParameterError):
        freq_loss(a, a, sched.T + 1, sched)


def test_dct_band_rel_l2_metric():
    rng = make_rng(3, 10)
    src = rng.standard_normal((16, 16, 3))
    assert dct_band_rel_l2(src, src, 0.2) == 0.0
    out = src + 0.1 * rng.standard_normal(src.shape)
    m = lpf_mask(16, 16, 0.2).mask[:, :, None]
    expected = np.linalg.norm(m * (dct2(out) - dct2(src))) / np.linalg.norm(m * dct2(src))
    assert np.isclose(dct_band_rel_l2(out, src, 0.2), expected, rtol=1e-12)
    with pytest.raises(ParameterError):
        dct_band_rel_l2(np.ones((8, 8)), np.zeros((8, 8)), 0.2)


# ---------------------------------------------------------------------- rapsd


def test_rapsd_white_noise_flat():
    rng = make_rng(3, 11)
    curve = mean_rapsd([rng.standard_normal((128, 128, 1)) for _ in range(50)])
    assert float(np.max(curve.power) / np.min(curve.power)) < 2.0


def test_rapsd_blur_lowers_high_band():
    rng = make_rng(3, 12)
    x = rng.standard_normal((64, 64))
    blurred = ndimage.gaussian_filter(x, 1.0)
    assert high_band_power(rapsd(blurred)) < high_band_power(rapsd(x))


def test_rapsd_constant_image():
    curve = rapsd(np.full((32, 32, 3), 0.5))
    assert np.max(curve.power) < 1e-20  # DC excluded, nothing else present


def test_rapsd_curve_invariants():
    curve = rapsd(make_rng(3, 13).standard_normal((40, 56, 3)))
    assert np.all(np.diff(curve.freqs) > 0)
    assert np.all(curve.power >= 0)
    assert curve.freqs[0] > 0.0
    assert curve.freqs[-1] <= 0.5 * np.sqrt(2) + 1e-12


def test_rapsd_curve_validation():
    with pytest.raises(ParameterError):
        RapsdCurve(freqs=np.array([0.2, 0.1]), power=np.array([1.0, 1.0]))
    with pytest.raises(ParameterError):
        RapsdCurve(freqs=np.array([0.1, 0.2]), power=np.array([-1.0, 1.0]))
    with pytest.raises(ShapeError):
        RapsdCurve(freqs=np.array([0.1, 0.2]), power=np.array([1.0]))


def test_band_power_and_mean_rapsd():
    rng = make_rng(3, 14)
    x = rng.standard_normal((32, 32, 3))
    single = rapsd(x)
    averaged = mean_rapsd([x, x, x])
    assert np.allclose(averaged.power, single.power, atol=1e-15)
    assert band_power(single, 0.0, 1.0) == pytest.approx(float(np.mean(single.power)))
    with pytest.raises(ParameterError):
        band_power(single, 0.9, 1.0)
    with pytest.raises(ParameterError):
        mean_rapsd([])
    with pytest.raises(ShapeError):
        mean_rapsd([x, rng.standard_normal((16, 16, 3))])
