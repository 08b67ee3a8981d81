"""One-step generator distillation.

The iterative single-image optimization is amortized into a residual
encoder-decoder G. Training is data-free with respect to the style corpus:
G only ever sees source images and the gradients coming through eps_style.

Two phases:
  1. reconstruction warmup, L1(G(x), x) — the residual architecture starts at
     the identity, so this mostly certifies the contract;
  2. distillation: per step one source image is repeated B times with
     independently drawn (t_i, eps_i), the per-instance style-matching seeds
     (plus lambda * freq-loss gradients) are averaged, and the mean is pushed
     through G via the usual stop-gradient surrogate sum(seed * G(x)). The
     fake network then takes one online update on G's current output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .denoiser import Condition, TrainConfig, fake_update_step, to_bchw, from_bchw
from .errors import ParameterError, TrainingDivergedError
from .nets import ResidualGenerator, check_finite, init_weights
from .rng import make_rng
from .schedule import NoiseSchedule, add_noise, eps_to_x0
from .spectrum import freq_loss
from .stylize import Networks, SmsConfig, weight_w, _relevance_for, OptimState


@dataclass(frozen=True)
class GenArch:
    in_channels: int = 3
    base: int = 16

    def to_dict(self) -> dict:
        return {"in_channels": self.in_channels, "base": self.base}

    @classmethod
    def from_dict(cls, d: dict) -> "GenArch":
        return cls(**{k: int(v) for k, v in d.items()})


class Generator:
    """ResidualGenerator plus architecture descriptor; role tag 'generator'."""

    role = "generator"

    def __init__(self, arch: GenArch = GenArch(), seed: int = 0):
        self.arch = arch
        self.net = ResidualGenerator(in_channels=arch.in_channels, base=arch.base)
        init_weights(self.net, make_rng(seed, 41))


@dataclass(frozen=True)
class BatchPlan:
    """One shared source image, B independent (t_i, eps_i) noisings."""

    B: int
    timesteps: tuple
    image: np.ndarray

    def __post_init__(self):
        if self.B < 1 or len(self.timesteps) != self.B:
            raise ParameterError(f"need B >= 1 timesteps, got B={self.B}")


@dataclass(frozen=True)
class DistillConfig:
    sms: SmsConfig = field(default_factory=SmsConfig)
    B: int = 4
    warmup_iters: int = 200
    warmup_lr: float = 2e-4
    warmup_batch: int = 8
    lr: float = 1e-4
    iters: int = 1500
    seed: int = 0

    def __post_init__(self):
        if self.B < 1 or self.warmup_iters < 0 or self.iters < 0:
            raise ParameterError("bad distillation sizes")
        if self.lr < 0 or self.warmup_lr < 0:
            raise ParameterError("learning rates must be >= 0")


def stylize_once(gen: Generator, x: np.ndarray) -> np.ndarray:
    """Single forward pass, clamped to [-1, 1]."""
    with torch.no_grad():
        out = gen.net(to_bchw(np.asarray(x, dtype=np.float64)))
    return np.clip(from_bchw(out, np.asarray(x).ndim), -1.0, 1.0)


def recon_warmup(gen: Generator, images: list[np.ndarray], cfg: DistillConfig) -> list[float]:
    """L1 reconstruction training; returns the per-step loss history."""
    if not images:
        raise ParameterError("empty warmup dataset")
    if cfg.warmup_iters == 0:
        return []
    rng = make_rng(cfg.seed, 43)
    data = torch.from_numpy(
        np.stack([np.asarray(x, dtype=np.float32) for x in images])
    ).permute(0, 3, 1, 2).contiguous()
    opt = torch.optim.Adam(gen.net.parameters(), lr=cfg.warmup_lr)
    losses = []
    for step in range(cfg.warmup_iters):
        idx = rng.integers(0, len(images), size=min(cfg.warmup_batch, len(images)))
        xb = data[idx]
        opt.zero_grad()
        loss = torch.mean(torch.abs(gen.net(xb) - xb))
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"warmup loss non-finite at step {step}")
        loss.backward()
        opt.step()
        losses.append(float(loss.item()))
    check_finite(gen.net)
    return losses


def make_batch_plan(
    x: np.ndarray, B: int, t_min: int, t_upper: int, rng: np.random.Generator
) -> BatchPlan:
    """B independently sampled timesteps over one shared image."""
    if B < 1:
        raise ParameterError(f"B must be >= 1, got {B}")
    if not (1 <= t_min <= t_upper):
        raise ParameterError(f"bad timestep range [{t_min}, {t_upper}]")
    ts = tuple(int(v) for v in rng.integers(t_min, t_upper + 1, size=B))
    return BatchPlan(B=B, timesteps=ts, image=np.asarray(x, dtype=np.float64))


def _instance_grad(
    out_np: np.ndarray,
    src: np.ndarray,
    t: int,
    cfg: SmsConfig,
    networks: Networks,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    cond_src: Condition,
    state: OptimState,
) -> tuple[np.ndarray, float, float]:
    """Gradient seed + losses for a single (t, eps) instance on G's output."""
    eps = rng.standard_normal(out_np.shape)
    z_t = add_noise(out_np, t, eps, sched)
    eps_style = networks.style.predict(z_t, t, cond_src)
    eps_fake = networks.fake.predict(z_t, t, cond_src)
    residual = eps_style - eps_fake
    if cfg.w_mode == "dmd_normalized":
        x0_style = eps_to_x0(z_t, eps_style, t, sched)
        w = weight_w(t, sched, cfg.w_mode, style_x0_residual=out_np - x0_style)
    else:
        w = weight_w(t, sched, cfg.w_mode)
    seed = w * residual
    if cfg.use_relevance:
        R = _relevance_for(state, networks, src, t, cfg, sched, rng, eps)
        seed = R.data * seed
    l_style = float(np.mean(seed**2))
    grad = seed
    l_freq = 0.0
    if cfg.use_freq:
        l_freq, g_freq = freq_loss(out_np, src, t, sched, t_ref=cfg.t_ref_eff,
                                   thld_mode=cfg.thld_mode)
        # same lam-stable convex combination as sms_image_step
        grad = (grad + cfg.lam * g_freq) / (1.0 + cfg.lam)
    return grad, l_style, l_freq


def train_generator(
    gen: Generator,
    dataset: list[tuple[np.ndarray, int]],
    networks: Networks,
    sched: NoiseSchedule,
    cfg: DistillConfig,
    use_content_cond: bool = True,
) -> list[tuple]:
    """Distillation loop; mutates gen, returns the trajectory log
    (step, t_first, L_style, L_freq, L_total), losses averaged over the B
    instances."""
    if not dataset:
        raise ParameterError("empty dataset")
    sms = cfg.sms
    if sms.t_max > sched.T:
        raise ParameterError(f"t_max {sms.t_max} exceeds schedule T {sched.T}")
    rng = make_rng(cfg.seed, 47)
    opt = torch.optim.Adam(gen.net.parameters(), lr=cfg.lr)
    trajectory = []
    state = OptimState(image=None)  # carries the relevance memo only
    for step in range(cfg.iters):
        x, class_id = dataset[int(rng.integers(0, len(dataset)))]
        cond_src = Condition.content(class_id) if use_content_cond else Condition.null()
        xb = to_bchw(x)
        out = gen.net(xb)
        out_np = from_bchw(out, 3)

        frac = 1.0 - step / cfg.iters
        t_upper = max(sms.t_min + 1, int(round(frac * sms.t_max)))
        plan = make_batch_plan(x, cfg.B, sms.t_min, t_upper, rng)

        grads, l_styles, l_freqs = [], [], []
        for t in plan.timesteps:
            g, ls, lf = _instance_grad(out_np, x, t, sms, networks, sched, rng, cond_src, state)
            grads.append(g)
            l_styles.append(ls)
            l_freqs.append(lf)
        mean_grad = np.mean(grads, axis=0)

        opt.zero_grad()
        seed_t = to_bchw(mean_grad)
        surrogate = torch.sum(seed_t.detach() * out)
        surrogate.backward()
        opt.step()
        check_finite(gen.net, "generator parameters")

        _fake_cfg = TrainConfig(lr=sms.fake_lr, iters=1, t_lo=sms.t_min, t_hi=sms.t_max)
        if hasattr(networks.fake, "update_on"):
            networks.fake.update_on(out_np, rng, cond_src)
        else:
            fake_update_step(networks.fake, out_np, sched, _fake_cfg, rng, cond_src)

        l_style = float(np.mean(l_styles))
        l_freq = float(np.mean(l_freqs))
        trajectory.append((step, plan.timesteps[0], l_style, l_freq,
                           l_style + sms.lam * l_freq))
    return trajectory


def save_generator(path, gen: Generator, sched: NoiseSchedule) -> None:
    from .checkpoint import save_checkpoint
    from .nets import get_flat_params
    from .schedule import schedule_hash

    save_checkpoint(
        path,
        {
            "kind": "generator",
            "role": "generator",
            "arch": gen.arch.to_dict(),
            "schedule_hash": schedule_hash(sched),
        },
        get_flat_params(gen.net),
    )


def load_generator(path, sched: NoiseSchedule) -> Generator:
    from .checkpoint import load_checkpoint
    from .nets import set_flat_params
    from .schedule import schedule_hash

    header, flat = load_checkpoint(path)
    if header.get("kind") != "generator":
        raise ParameterError(f"{path}: checkpoint kind {header.get('kind')!r}, wanted generator")
    if header["schedule_hash"] != schedule_hash(sched):
        raise ParameterError(f"{path}: checkpoint was trained against a different schedule")
    gen = Generator(GenArch.from_dict(header["arch"]))
    set_flat_params(gen.net, flat)
    return gen
