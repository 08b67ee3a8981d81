"""Discrete variance-preserving noise schedule and prediction conversions.

Conventions used throughout the package:

    alpha_bar_t = prod_{s<=t} (1 - beta_s),   alpha_bar_0 = 1
    alpha_t     = sqrt(alpha_bar_t)
    sigma_t     = sqrt(1 - alpha_bar_t)            (so alpha_t^2 + sigma_t^2 = 1)

    forward noising   z_t = alpha_t * z0 + sigma_t * eps,  eps ~ N(0, I)
    data prediction   x0_hat = (z_t - sigma_t * eps_hat) / alpha_t
    marginal score    score(z_t) = -eps_hat / sigma_t

The score sign follows the standard convention: for z_t = alpha_t x0 + sigma_t eps
with x0 ~ N(0, I), the noised marginal is N(0, I) and its score is -z_t, which
the identity above reproduces with the optimal predictor eps_hat = sigma_t z_t.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import NumericGuardError, ParameterError, ShapeError

# Conversions refuse to divide by coefficients below this.
COEF_FLOOR = 1e-8


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed linear-beta DDPM schedule over timesteps 0..T.

    Index 0 is the clean-data limit (alpha_bar_0 = 1); index T is the most
    noised step.
    """

    T: int
    beta_min: float
    beta_max: float
    alpha_bar: np.ndarray  # shape (T+1,)
    alpha: np.ndarray      # sqrt(alpha_bar)
    sigma: np.ndarray      # sqrt(1 - alpha_bar)

    def __post_init__(self):
        ab = self.alpha_bar
        if ab.shape != (self.T + 1,):
            raise ShapeError(f"alpha_bar must have length T+1={self.T + 1}, got {ab.shape}")
        if abs(ab[0] - 1.0) > 1e-12:
            raise ParameterError("alpha_bar[0] must equal 1")
        if np.any(np.diff(ab) >= 0):
            raise ParameterError("alpha_bar must be strictly decreasing")
        if np.any(ab <= 0) or np.any(ab > 1):
            raise ParameterError("alpha_bar values must lie in (0, 1]")
        vp = self.alpha**2 + self.sigma**2
        if np.max(np.abs(vp - 1.0)) > 1e-12:
            raise ParameterError("variance-preserving identity violated")

    def to_json(self) -> str:
        return json.dumps(
            {
                "T": self.T,
                "beta_min": self.beta_min,
                "beta_max": self.beta_max,
                "alpha_bar": self.alpha_bar.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "NoiseSchedule":
        d = json.loads(text)
        ab = np.asarray(d["alpha_bar"], dtype=np.float64)
        return cls(
            T=int(d["T"]),
            beta_min=float(d["beta_min"]),
            beta_max=float(d["beta_max"]),
            alpha_bar=ab,
            alpha=np.sqrt(ab),
            sigma=np.sqrt(1.0 - ab),
        )


def make_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 2e-2) -> NoiseSchedule:
    """Linear-beta schedule: beta_1..beta_T equally spaced in [beta_min, beta_max].

    beta_min == beta_max is allowed (constant-beta schedule).
    """
    if T < 2:
        raise ParameterError(f"T must be >= 2, got {T}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ParameterError(f"need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]")
    betas = np.linspace(beta_min, beta_max, T, dtype=np.float64)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(
        T=T,
        beta_min=float(beta_min),
        beta_max=float(beta_max),
        alpha_bar=alpha_bar,
        alpha=np.sqrt(alpha_bar),
        sigma=np.sqrt(1.0 - alpha_bar),
    )


def schedule_hash(sched: NoiseSchedule) -> str:
    """Short content hash used to tie checkpoints to the schedule they assume."""
    key = f"{sched.T}:{sched.beta_min!r}:{sched.beta_max!r}".encode()
    return hashlib.sha256(key).hexdigest()[:16]


def _check_t(t, T):
    t_arr = np.asarray(t)
    if np.any(t_arr < 0) or np.any(t_arr > T):
        raise ParameterError(f"timestep {t} outside [0, {T}]")


def _coef(table: np.ndarray, t, like: np.ndarray):
    """Look up per-timestep coefficients and shape them to broadcast against `like`.

    Scalar t gives a scalar; array t of shape (N,) pairs with leading batch
    axes of `like`.
    """
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(table[int(t)])
    t_arr = np.asarray(t)
    c = table[t_arr]
    return c.reshape(t_arr.shape + (1,) * (like.ndim - t_arr.ndim))


def add_noise(z0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Forward noising z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps."""
    z0 = np.asarray(z0)
    eps = np.asarray(eps)
    if z0.shape != eps.shape:
        raise ShapeError(f"z0 {z0.shape} vs eps {eps.shape}")
    _check_t(t, sched.T)
    return _coef(sched.alpha, t, z0) * z0 + _coef(sched.sigma, t, z0) * eps


def eps_to_x0(z_t: np.ndarray, eps_hat: np.ndarray, t, sched: NoiseSchedule) -> np.ndarray:
    """Data prediction (z_t - sigma_t eps_hat) / alpha_t."""
    z_t = np.asarray(z_t)
    eps_hat = np.asarray(eps_hat)
    if z_t.shape != eps_hat.shape:
        raise ShapeError(f"z_t {z_t.shape} vs eps_hat {eps_hat.shape}")
    _check_t(t, sched.T)
    a = _coef(sched.alpha, t, z_t)
    if np.min(a) < COEF_FLOOR:
        raise NumericGuardError(f"alpha_t below {COEF_FLOOR} at t={t}; near-pure-noise timestep")
    return (z_t - _coef(sched.sigma, t, z_t) * eps_hat) / a


def eps_to_score(eps_hat: np.ndarray, t, sched: NoiseSchedule) -> np.ndarray:
    """Score of the noised marginal, -eps_hat / sigma_t."""
    eps_hat = np.asarray(eps_hat)
    _check_t(t, sched.T)
    s = _coef(sched.sigma, t, eps_hat)
    if np.min(s) < COEF_FLOOR:
        raise NumericGuardError(f"sigma_t below {COEF_FLOOR} at t={t}")
    return -eps_hat / s
