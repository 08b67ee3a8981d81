"""Semantic gradient refinement via conditioning-difference relevance maps.

    R = minmax( |eps_real(z_t; edit) - eps_real(z_t; null)| ),
    z_t = alpha_t z_src0 + sigma_t eps   (one shared eps for both predictions)

Sharing eps across the two conditionings isolates the effect of the
conditioning itself; a fresh draw per branch would add pure noise variance to
the map. R multiplies the style residual element-wise before it is used as
the image gradient (the weighting is applied once, to the gradient seed, not
squared inside a loss).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import Condition, Denoiser
from .errors import ShapeError
from .schedule import NoiseSchedule, add_noise

DEGENERATE_SPAN = 1e-12


@dataclass(frozen=True)
class RelevanceMap:
    data: np.ndarray  # HWC (or cloud-shaped) array in [0, 1]
    t: int
    degenerate: bool = False  # constant difference -> all-zero map


def minmax_norm(x: np.ndarray) -> np.ndarray:
    """(x - min) / (max - min); all zeros when the span is degenerate.

    The zero fallback means "no usable relevance signal": downstream, a zero
    map suppresses the style push entirely rather than amplifying noise.
    """
    x = np.asarray(x, dtype=np.float64)
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi - lo <= DEGENERATE_SPAN:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def relevance_map(
    real: Denoiser,
    z_src0: np.ndarray,
    t: int,
    edit: Condition,
    null: Condition,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    eps: np.ndarray | None = None,
) -> RelevanceMap:
    """eps=None draws the shared noise from rng; callers that already noised
    the target with some eps pass it in so source and target see the same draw."""
    z_src0 = np.asarray(z_src0, dtype=np.float64)
    if eps is None:
        eps = rng.standard_normal(z_src0.shape)
    z_t = add_noise(z_src0, t, eps, sched)
    diff = np.abs(real.predict(z_t, t, edit) - real.predict(z_t, t, null))
    span = float(np.max(diff) - np.min(diff))
    data = minmax_norm(diff)
    return RelevanceMap(data=data, t=int(t), degenerate=span <= DEGENERATE_SPAN)


def apply_refinement(raw_grad: np.ndarray, R: RelevanceMap) -> np.ndarray:
    """Element-wise product R * raw_grad."""
    raw_grad = np.asarray(raw_grad, dtype=np.float64)
    if raw_grad.shape != R.data.shape:
        raise ShapeError(f"grad {raw_grad.shape} vs relevance {R.data.shape}")
    return R.data * raw_grad


def relevance_to_gray(R: RelevanceMap) -> np.ndarray:
    """Channel-averaged HW view in [0, 1] for PNG export."""
    d = R.data
    return d.mean(axis=2) if d.ndim == 3 else d
