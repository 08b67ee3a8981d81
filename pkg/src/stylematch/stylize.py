"""Single-image style-matching optimization.

The image itself is the parameter vector theta. Each iteration: draw a
timestep from the (optionally narrowing) sampling range, noise the current
image, form the distribution-matching residual

    seed = R * ( w_t * (eps_style(z_t) - eps_fake(z_t)) )

treat it as a constant per-pixel gradient (stop-gradient: no second-order
terms through the denoisers), add lambda * grad of the low-pass DCT loss
against the source, take a plain gradient-descent step, then give the fake
network one online update on the new image. The total loss being descended is
L_style + lambda * L_freq; L_style is logged as the mean squared gradient
seed (its magnitude is the only observable under the stop-gradient form).

Everything here also runs on (N, d) point clouds instead of images (freq and
relevance off), which is how the update rule is verified against analytic
Gaussian oracles.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .denoiser import Condition, Denoiser, TrainConfig, fake_update_step
from .errors import ParameterError, TrainingDivergedError
from .relevance import RelevanceMap, apply_refinement, relevance_map
from .schedule import NoiseSchedule, add_noise, eps_to_x0
from .spectrum import freq_loss
from .rng import make_rng

SAMPLER_MODES = ("adaptive_narrowing", "uniform_random", "linear_decreasing")
W_MODES = ("constant", "sigma2_over_alpha", "dmd_normalized")


class IdentityCodec:
    """Latent codec boundary. Identity at desk scale; a learned autoencoder
    can be slotted in here without touching the update rules."""

    def encode(self, img: np.ndarray) -> np.ndarray:
        return np.asarray(img, dtype=np.float64)

    def decode(self, lat: np.ndarray) -> np.ndarray:
        return np.asarray(lat, dtype=np.float64)


@dataclass(frozen=True)
class SmsConfig:
    lam: float = 1.0
    iter_total: int = 500
    t_min: int = 20
    t_max: int = 500
    w_mode: str = "sigma2_over_alpha"
    step_size: float = 0.08
    use_relevance: bool = True
    use_freq: bool = True
    sampler: str = "adaptive_narrowing"
    seed: int = 0
    t_ref: int | None = None        # None -> t_max
    thld_mode: str = "increasing"
    fake_lr: float = 1e-4
    relevance_cache: bool = False   # per-t map cache; default recomputes every iter
    snapshot_every: int = 0
    clamp_output: bool = True       # off for point-cloud runs whose support exceeds [-1,1]

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError("lambda must be >= 0")
        if self.iter_total < 1:
            raise ParameterError("iter_total must be >= 1")
        if not (1 <= self.t_min < self.t_max):
            raise ParameterError(f"need 1 <= t_min < t_max, got [{self.t_min}, {self.t_max}]")
        if self.sampler not in SAMPLER_MODES:
            raise ParameterError(f"sampler must be one of {SAMPLER_MODES}")
        if self.w_mode not in W_MODES:
            raise ParameterError(f"w_mode must be one of {W_MODES}")
        if self.step_size <= 0:
            raise ParameterError("step_size must be positive")

    @property
    def t_ref_eff(self) -> int:
        return self.t_max if self.t_ref is None else self.t_ref


@dataclass
class Networks:
    """The three eps-models. style/fake need .predict(z_t, t, cond); fake
    additionally either .update_on(z0, rng, cond) (oracle stand-ins) or is a
    Denoiser updated via fake_update_step. real is only needed for relevance."""

    style: object
    fake: object
    real: Denoiser | None = None
    edit: Condition = field(default_factory=lambda: Condition.edit(0))
    null: Condition = field(default_factory=Condition.null)


@dataclass
class OptimState:
    image: np.ndarray
    iter_cur: int = 0
    trajectory: list = field(default_factory=list)  # (iter, t, L_style, L_freq, L_total)
    relevance_memo: dict = field(default_factory=dict)


def sample_timestep(
    iter_cur: int, iter_total: int, t_min: int, t_max: int, mode: str, rng: np.random.Generator
) -> int:
    """Timestep for this iteration; adaptive narrowing shrinks the upper bound
    linearly: t_upper = max(t_min + 1, round((1 - iter_cur/iter_total) * t_max))."""
    if not (0 <= iter_cur < iter_total):
        raise ParameterError(f"iter_cur {iter_cur} outside [0, {iter_total})")
    if mode == "uniform_random":
        return int(rng.integers(t_min, t_max + 1))
    frac = 1.0 - iter_cur / iter_total
    if mode == "adaptive_narrowing":
        t_upper = max(t_min + 1, int(round(frac * t_max)))
        return int(rng.integers(t_min, t_upper + 1))
    if mode == "linear_decreasing":
        return max(t_min, int(round(frac * t_max)))
    raise ParameterError(f"unknown sampler mode {mode!r}")


def weight_w(
    t: int, sched: NoiseSchedule, mode: str, style_x0_residual: np.ndarray | None = None
) -> float:
    """Timestep weight w_t. dmd_normalized rescales sigma^2/alpha by
    numel / ||z0 - x0_style_pred||_1 so the step size is insensitive to how
    far the style prediction currently is (the usual distribution-matching
    normalization)."""
    if mode == "constant":
        return 1.0
    a = float(sched.alpha[int(t)])
    s = float(sched.sigma[int(t)])
    base = s * s / a
    if mode == "sigma2_over_alpha":
        return base
    if mode == "dmd_normalized":
        if style_x0_residual is None:
            raise ParameterError("dmd_normalized needs the style x0 residual")
        l1 = float(np.sum(np.abs(style_x0_residual)))
        if l1 < 1e-12:
            warnings.warn("zero style residual; falling back to sigma2_over_alpha")
            return base
        return base * style_x0_residual.size / l1
    raise ParameterError(f"unknown w mode {mode!r}")


def style_matching_residual(
    style,
    fake,
    z_tgt0: np.ndarray,
    t: int,
    cond_src: Condition,
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """eps_style(z_t) - eps_fake(z_t) at z_t = alpha_t z_tgt0 + sigma_t eps,
    one shared eps for both predictions. Constant w.r.t. the image."""
    z_tgt0 = np.asarray(z_tgt0, dtype=np.float64)
    eps = rng.standard_normal(z_tgt0.shape)
    z_t = add_noise(z_tgt0, t, eps, sched)
    return _residual_at(style, fake, z_t, t, cond_src)


def _residual_at(style, fake, z_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
    return style.predict(z_t, t, cond) - fake.predict(z_t, t, cond)


def _update_fake(networks: Networks, z0_new, cfg: SmsConfig, sched, rng, cond):
    fake = networks.fake
    if hasattr(fake, "update_on"):
        fake.update_on(np.asarray(z0_new), rng, cond)
        return
    fake_cfg = TrainConfig(lr=cfg.fake_lr, iters=1, t_lo=cfg.t_min, t_hi=cfg.t_max)
    fake_update_step(fake, z0_new, sched, fake_cfg, rng, cond)


def _relevance_for(
    state: OptimState, networks: Networks, src, t, cfg: SmsConfig, sched, rng, eps
) -> RelevanceMap:
    if cfg.relevance_cache and t in state.relevance_memo:
        return state.relevance_memo[t]
    if networks.real is None:
        raise ParameterError("relevance enabled but no real network provided")
    # eps is the iteration's shared draw: source and target are noised
    # identically within one step.
    R = relevance_map(networks.real, src, t, networks.edit, networks.null, sched, rng, eps=eps)
    if cfg.relevance_cache:
        state.relevance_memo[t] = R
    return R


def sms_image_step(
    state: OptimState,
    src: np.ndarray,
    cfg: SmsConfig,
    networks: Networks,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    cond_src: Condition | None = None,
) -> OptimState:
    """One optimization step; returns the advanced state (image not clamped)."""
    cond_src = cond_src or Condition.null()
    src = np.asarray(src, dtype=np.float64)
    img = state.image
    t = sample_timestep(state.iter_cur, cfg.iter_total, cfg.t_min, cfg.t_max, cfg.sampler, rng)

    eps = rng.standard_normal(img.shape)
    z_t = add_noise(img, t, eps, sched)
    eps_style = networks.style.predict(z_t, t, cond_src)
    eps_fake = networks.fake.predict(z_t, t, cond_src)
    residual = eps_style - eps_fake

    if cfg.w_mode == "dmd_normalized":
        x0_style = eps_to_x0(z_t, eps_style, t, sched)
        w = weight_w(t, sched, cfg.w_mode, style_x0_residual=img - x0_style)
    else:
        w = weight_w(t, sched, cfg.w_mode)

    seed = w * residual
    if cfg.use_relevance:
        R = _relevance_for(state, networks, src, t, cfg, sched, rng, eps)
        seed = apply_refinement(seed, R)
    l_style = float(np.mean(seed**2))

    grad = seed
    l_freq = 0.0
    if cfg.use_freq:
        l_freq, g_freq = freq_loss(
            img, src, t, sched, t_ref=cfg.t_ref_eff, thld_mode=cfg.thld_mode
        )
        # Convex combination instead of seed + lam*g: keeps the explicit
        # Euler step stable for any lam (raw lam*g diverges once
        # 2*lam*step > 2), so the lam -> inf limit degrades gracefully to
        # pure reconstruction of src.
        grad = (grad + cfg.lam * g_freq) / (1.0 + cfg.lam)

    new_img = img - cfg.step_size * grad
    if not np.all(np.isfinite(new_img)):
        err = TrainingDivergedError(f"non-finite image at iteration {state.iter_cur} (t={t})")
        err.state = state
        raise err

    _update_fake(networks, new_img, cfg, sched, rng, cond_src)

    l_total = l_style + cfg.lam * l_freq
    state.trajectory.append((state.iter_cur, t, l_style, l_freq, l_total))
    state.image = new_img
    state.iter_cur += 1
    return state


def optimize_image(
    src: np.ndarray,
    cfg: SmsConfig,
    networks: Networks,
    sched: NoiseSchedule,
    cond_src: Condition | None = None,
    codec: IdentityCodec | None = None,
    snapshot_hook: Callable[[int, OptimState], None] | None = None,
) -> tuple[np.ndarray, list]:
    """Run the full loop; returns (final image clamped to [-1, 1], trajectory).

    The image is clamped only at output, not per step, to avoid projection
    bias during optimization.
    """
    if cfg.t_max > sched.T:
        raise ParameterError(f"t_max {cfg.t_max} exceeds schedule T {sched.T}")
    codec = codec or IdentityCodec()
    rng = make_rng(cfg.seed, 23)
    lat_src = codec.encode(src)
    state = OptimState(image=lat_src.copy())
    for _ in range(cfg.iter_total):
        state = sms_image_step(state, lat_src, cfg, networks, sched, rng, cond_src)
        if snapshot_hook and cfg.snapshot_every and state.iter_cur % cfg.snapshot_every == 0:
            snapshot_hook(state.iter_cur, state)
    out = codec.decode(state.image)
    if cfg.clamp_output:
        out = np.clip(out, -1.0, 1.0)
    return out, state.trajectory


def write_trajectory_csv(path, rows) -> None:
    """CSV trajectory: iter, t_sampled, L_style, L_freq, L_total.

    Fixed %.10g formatting so identical runs are byte-identical."""
    with open(path, "w") as f:
        f.write("iter,t_sampled,L_style,L_freq,L_total\n")
        for it, t, ls, lf, lt in rows:
            f.write(f"{int(it)},{int(t)},{ls:.10g},{lf:.10g},{lt:.10g}\n")
