"""Closed-form score oracles on isotropic Gaussian mixtures.

These stand in for a pretrained diffusion model wherever an exact answer is
available: a K-component mixture with isotropic covariances stays a mixture
under the forward noising z_t = alpha_t x + sigma_t eps, with

    component k at time t:  N(alpha_t * m_k,  (alpha_t^2 * v_k + sigma_t^2) I)

so the noised marginal's score, the corresponding optimal eps-prediction
(eps* = -sigma_t * score), and single-Gaussian KLs are all exact. Learned
networks and the distribution-matching update rule are verified against these
before anything is trained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ParameterError, ShapeError
from .schedule import NoiseSchedule, add_noise

_LOG2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic GMM: component k is N(means[k], variances[k] * I)."""

    means: np.ndarray      # (K, d)
    variances: np.ndarray  # (K,)
    weights: np.ndarray    # (K,) nonnegative, sums to 1

    def __post_init__(self):
        m, v, w = self.means, self.variances, self.weights
        if m.ndim != 2:
            raise ShapeError(f"means must be (K, d), got {m.shape}")
        K = m.shape[0]
        if v.shape != (K,) or w.shape != (K,):
            raise ShapeError(f"variances/weights must be ({K},), got {v.shape}, {w.shape}")
        if np.any(v <= 0):
            raise ParameterError("component variances must be positive")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError("weights must be nonnegative and sum to 1")

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        comp = rng.choice(self.K, size=n, p=self.weights / self.weights.sum())
        std = np.sqrt(self.variances[comp])[:, None]
        return self.means[comp] + std * rng.standard_normal((n, self.dim))

    def noised(self, t, sched: NoiseSchedule) -> "GaussianMixture":
        """The mixture that z_t follows when x ~ self."""
        a = float(sched.alpha[int(t)])
        s2 = float(sched.sigma[int(t)]) ** 2
        return GaussianMixture(
            means=a * self.means,
            variances=a * a * self.variances + s2,
            weights=self.weights.copy(),
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "weights": self.weights.tolist(),
                "means": self.means.tolist(),
                "variances": self.variances.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "GaussianMixture":
        d = json.loads(text)
        return cls(
            means=np.asarray(d["means"], dtype=np.float64),
            variances=np.asarray(d["variances"], dtype=np.float64),
            weights=np.asarray(d["weights"], dtype=np.float64),
        )


def single_gaussian(mean, var: float) -> GaussianMixture:
    m = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    return GaussianMixture(
        means=m[None, :], variances=np.array([float(var)]), weights=np.array([1.0])
    )


def _component_logpdfs(gm: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """log w_k + log N(x; m_k, v_k I) for each point/component, shape (N, K)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != gm.dim:
        raise ShapeError(f"points are {x.shape[1]}-d, mixture is {gm.dim}-d")
    d = gm.dim
    diff = x[:, None, :] - gm.means[None, :, :]          # (N, K, d)
    sq = np.sum(diff * diff, axis=2)                      # (N, K)
    v = gm.variances[None, :]
    with np.errstate(divide="ignore"):
        logw = np.log(gm.weights[None, :])
    return logw - 0.5 * (sq / v + d * np.log(v) + d * _LOG2PI)


def log_density(gm: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """log p(x) under the mixture; x is (N, d) or (d,), result (N,) or scalar."""
    single = np.asarray(x).ndim == 1
    lp = logsumexp(_component_logpdfs(gm, x), axis=1)
    return float(lp[0]) if single else lp


def score(gm: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """grad_x log p(x): responsibility-weighted sum of (m_k - x) / v_k."""
    single = np.asarray(x).ndim == 1
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    lj = _component_logpdfs(gm, x2)                      # (N, K)
    resp = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
    pull = (gm.means[None, :, :] - x2[:, None, :]) / gm.variances[None, :, None]
    out = np.sum(resp[:, :, None] * pull, axis=1)
    return out[0] if single else out


def noised_marginal_score(gm: GaussianMixture, z_t: np.ndarray, t, sched: NoiseSchedule) -> np.ndarray:
    """Score of the time-t noised marginal, grad log p_t, evaluated at z_t. Exact."""
    return score(gm.noised(t, sched), z_t)


def optimal_eps(gm: GaussianMixture, z_t: np.ndarray, t, sched: NoiseSchedule) -> np.ndarray:
    """The eps-prediction a perfect denoiser would output: -sigma_t * score_t(z_t)."""
    s = float(sched.sigma[int(t)])
    return -s * noised_marginal_score(gm, z_t, t, sched)


def gaussian_kl(p: GaussianMixture, q: GaussianMixture) -> float:
    """KL(p || q) for single-component (isotropic Gaussian) oracles, closed form.

    Multi-component mixtures have no closed-form KL; compare moment fits
    instead (fit_isotropic_gaussian).
    """
    if p.K != 1 or q.K != 1:
        raise ParameterError("closed-form KL needs single-component oracles")
    if p.dim != q.dim:
        raise ShapeError(f"dimension mismatch: {p.dim} vs {q.dim}")
    return gaussian_kl_moments(p.means[0], float(p.variances[0]), q.means[0], float(q.variances[0]))


def gaussian_kl_moments(m1, v1: float, m2, v2: float) -> float:
    """KL( N(m1, v1 I) || N(m2, v2 I) ) from raw moments."""
    m1 = np.asarray(m1, dtype=np.float64).ravel()
    m2 = np.asarray(m2, dtype=np.float64).ravel()
    if m1.shape != m2.shape:
        raise ShapeError(f"mean shapes differ: {m1.shape} vs {m2.shape}")
    if v1 <= 0 or v2 <= 0:
        raise ParameterError("variances must be positive")
    d = m1.size
    return 0.5 * (d * v1 / v2 + float(np.sum((m2 - m1) ** 2)) / v2 - d + d * np.log(v2 / v1))


def fit_isotropic_gaussian(x: np.ndarray) -> tuple[np.ndarray, float]:
    """Moment-match a point cloud (N, d) with N(mean, var I); var averages dims."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected (N, d) cloud, got {x.shape}")
    mean = x.mean(axis=0)
    var = float(np.mean((x - mean) ** 2))
    return mean, max(var, 1e-12)


def reference_kl_gradient(
    z0: np.ndarray,
    style: GaussianMixture,
    fake: GaussianMixture,
    t,
    sched: NoiseSchedule,
    eps: np.ndarray | None = None,
    w: float = 1.0,
) -> np.ndarray:
    """Exact distribution-matching gradient seed at z_t = alpha_t z0 + sigma_t eps:

        w * (eps*_style(z_t) - eps*_fake(z_t))

    Equivalently w * sigma_t * (score_fake - score_style): descending it moves
    z0 toward regions where style density exceeds fake density. This is the
    ground truth the network-based residual is checked against; Monte-Carlo
    averaging over eps draws gives the expected update.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    if eps is None:
        eps = np.zeros_like(z0)
    z_t = add_noise(z0, t, np.asarray(eps, dtype=np.float64), sched)
    return w * (optimal_eps(style, z_t, t, sched) - optimal_eps(fake, z_t, t, sched))
