"""Trainable eps-prediction networks and their training loops.

Three networks share one architecture and differ only by role: `real` is
pretrained on the source corpus with Content/Edit/Null conditioning, `style`
on the style corpus, and `fake` starts as a weight copy of `real` and is
updated online to track the evolving output distribution (the adapter-based
variant in the original setting; full small networks here, same role
semantics).

Arrays at this boundary are numpy HWC float images in [-1, 1], or (N, d)
point clouds which are treated as N single-pixel images with d channels (the
same architecture then degenerates to per-point MLP behavior, so one code
path serves both the image pipeline and low-dimensional verification).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .errors import ParameterError, ShapeError, TrainingDivergedError
from .nets import CondEpsNet, check_finite, get_flat_grads, init_weights
from .rng import make_rng
from .schedule import NoiseSchedule

ROLES = ("real", "style", "fake")


@dataclass(frozen=True)
class Condition:
    """Conditioning label: Null, Content(id), or Edit(id)."""

    kind: str  # "null" | "content" | "edit"
    id: int = 0

    def __post_init__(self):
        if self.kind not in ("null", "content", "edit"):
            raise ParameterError(f"unknown condition kind {self.kind!r}")
        if self.id < 0:
            raise ParameterError("condition id must be >= 0")

    @classmethod
    def null(cls) -> "Condition":
        return cls("null", 0)

    @classmethod
    def content(cls, k: int) -> "Condition":
        return cls("content", k)

    @classmethod
    def edit(cls, s: int = 0) -> "Condition":
        return cls("edit", s)


@dataclass(frozen=True)
class ArchSpec:
    """Architecture descriptor; embedding table holds Null + contents + edits."""

    in_channels: int = 3
    width: int = 24
    depth: int = 4
    emb_dim: int = 32
    n_content: int = 4
    n_edit: int = 1

    @property
    def n_cond(self) -> int:
        return 1 + self.n_content + self.n_edit

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "width": self.width,
            "depth": self.depth,
            "emb_dim": self.emb_dim,
            "n_content": self.n_content,
            "n_edit": self.n_edit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        return cls(**{k: int(v) for k, v in d.items()})


def cond_index(arch: ArchSpec, cond: Condition) -> int:
    if cond.kind == "null":
        return 0
    if cond.kind == "content":
        if cond.id >= arch.n_content:
            raise ParameterError(f"content id {cond.id} >= n_content {arch.n_content}")
        return 1 + cond.id
    if cond.id >= arch.n_edit:
        raise ParameterError(f"edit id {cond.id} >= n_edit {arch.n_edit}")
    return 1 + arch.n_content + cond.id


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    iters: int = 800
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    t_lo: int = 1
    t_hi: int | None = None  # None -> schedule T

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.iters < 0:
            raise ParameterError("hyperparameters must be positive (lr may be 0 for no-ops)")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError("optimizer moments must lie in [0, 1)")
        if self.t_lo < 1 or (self.t_hi is not None and self.t_hi < self.t_lo):
            raise ParameterError(f"bad timestep range [{self.t_lo}, {self.t_hi}]")


class Denoiser:
    """A CondEpsNet plus role tag and lazily created update optimizer."""

    def __init__(self, arch: ArchSpec, role: str, seed: int = 0):
        if role not in ROLES:
            raise ParameterError(f"role must be one of {ROLES}, got {role!r}")
        self.arch = arch
        self.role = role
        self.net = CondEpsNet(
            in_channels=arch.in_channels,
            width=arch.width,
            depth=arch.depth,
            emb_dim=arch.emb_dim,
            n_cond=arch.n_cond,
        )
        init_weights(self.net, make_rng(seed, 11, _role_stream(role)))
        self._opt: torch.optim.Adam | None = None
        self._opt_lr: float | None = None

    def _optimizer(self, cfg: TrainConfig) -> torch.optim.Adam:
        if self._opt is None:
            self._opt = torch.optim.Adam(
                self.net.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2)
            )
            self._opt_lr = cfg.lr
        elif self._opt_lr != cfg.lr:
            for g in self._opt.param_groups:
                g["lr"] = cfg.lr
            self._opt_lr = cfg.lr

        return self._opt

    def predict(self, z_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        """Eps-prediction on one image (HWC) or point cloud (N, d)."""
        zb = to_bchw(z_t)
        tb = torch.full((zb.shape[0],), int(t), dtype=torch.long)
        cb = torch.full((zb.shape[0],), cond_index(self.arch, cond), dtype=torch.long)
        with torch.no_grad():
            out = self.net(zb, tb, cb)
        res = from_bchw(out, np.asarray(z_t).ndim)
        if res.shape != np.asarray(z_t).shape:
            raise ShapeError(f"output {res.shape} != input {np.asarray(z_t).shape}")
        return res


def _role_stream(role: str) -> int:
    return ROLES.index(role)


def to_bchw(z: np.ndarray) -> torch.Tensor:
    """HWC image -> (1,C,H,W); (N,d) cloud -> (N,d,1,1)."""
    z = np.asarray(z, dtype=np.float32)
    if z.ndim == 3:
        return torch.from_numpy(z).permute(2, 0, 1).unsqueeze(0).contiguous()
    if z.ndim == 2:
        return torch.from_numpy(z).reshape(z.shape[0], z.shape[1], 1, 1).contiguous()
    raise ShapeError(f"expected HWC image or (N, d) cloud, got {z.shape}")


def from_bchw(z: torch.Tensor, ndim: int) -> np.ndarray:
    if ndim == 3:
        return z[0].permute(1, 2, 0).detach().numpy().astype(np.float64)
    return z[:, :, 0, 0].detach().numpy().astype(np.float64)


def copy_denoiser(src: Denoiser, role: str) -> Denoiser:
    """Fresh network with src's weights (the copy-weights initialization)."""
    dst = Denoiser(src.arch, role)
    dst.net.load_state_dict(copy.deepcopy(src.net.state_dict()))
    return dst


def _batch_predict(model: Denoiser, zb: torch.Tensor, t_idx: np.ndarray, cond_ids: np.ndarray):
    tb = torch.from_numpy(np.asarray(t_idx, dtype=np.int64))
    cb = torch.from_numpy(np.asarray(cond_ids, dtype=np.int64))
    return model.net(zb, tb, cb)


def denoise_loss(
    model: Denoiser, z0: np.ndarray, t: int, eps: np.ndarray, cond: Condition, sched: NoiseSchedule
) -> tuple[float, np.ndarray]:
    """Mean squared eps-prediction error and its flat parameter gradient."""
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ShapeError(f"z0 {z0.shape} vs eps {eps.shape}")
    a, s = float(sched.alpha[int(t)]), float(sched.sigma[int(t)])
    z_t = a * z0 + s * eps
    zb = to_bchw(z_t)
    eb = to_bchw(eps)
    n = zb.shape[0]
    model.net.zero_grad()
    pred = _batch_predict(
        model, zb,
        np.full(n, int(t)), np.full(n, cond_index(model.arch, cond)),
    )
    loss = torch.mean((pred - eb) ** 2)
    loss.backward()
    return float(loss.item()), get_flat_grads(model.net)


def train_denoiser(
    model: Denoiser,
    dataset: list[tuple[np.ndarray, Condition]],
    sched: NoiseSchedule,
    cfg: TrainConfig,
) -> tuple[Denoiser, list[float]]:
    """Standard denoising pretraining; returns the model and per-step losses."""
    if not dataset:
        raise ParameterError("empty dataset")
    if cfg.iters == 0:
        return model, []
    rng = make_rng(cfg.seed, 17)
    t_hi = sched.T if cfg.t_hi is None else cfg.t_hi
    if t_hi > sched.T:
        raise ParameterError(f"t_hi {t_hi} exceeds schedule T {sched.T}")
    imgs = np.stack([np.asarray(x, dtype=np.float32) for x, _ in dataset])
    cond_ids = np.array([cond_index(model.arch, c) for _, c in dataset], dtype=np.int64)
    data = torch.from_numpy(imgs).permute(0, 3, 1, 2).contiguous()
    opt = torch.optim.Adam(model.net.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    losses: list[float] = []
    for step in range(cfg.iters):
        idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        t_idx = rng.integers(cfg.t_lo, t_hi + 1, size=cfg.batch_size)
        eps = rng.standard_normal((cfg.batch_size,) + tuple(data.shape[1:])).astype(np.float32)
        a = sched.alpha[t_idx].astype(np.float32)[:, None, None, None]
        s = sched.sigma[t_idx].astype(np.float32)[:, None, None, None]
        eb = torch.from_numpy(eps)
        zb = torch.from_numpy(a) * data[idx] + torch.from_numpy(s) * eb
        opt.zero_grad()
        pred = _batch_predict(model, zb, t_idx, cond_ids[idx])
        loss = torch.mean((pred - eb) ** 2)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"denoiser loss non-finite at step {step}")
        loss.backward()
        opt.step()
        losses.append(float(loss.item()))
    check_finite(model.net)
    return model, losses


def save_denoiser(path, model: Denoiser, sched: NoiseSchedule) -> None:
    from .checkpoint import save_checkpoint
    from .nets import get_flat_params
    from .schedule import schedule_hash

    save_checkpoint(
        path,
        {
            "kind": "denoiser",
            "role": model.role,
            "arch": model.arch.to_dict(),
            "schedule_hash": schedule_hash(sched),
        },
        get_flat_params(model.net),
    )


def load_denoiser(path, sched: NoiseSchedule) -> Denoiser:
    from .checkpoint import load_checkpoint
    from .nets import set_flat_params
    from .schedule import schedule_hash

    header, flat = load_checkpoint(path)
    if header.get("kind") != "denoiser":
        raise ParameterError(f"{path}: checkpoint kind {header.get('kind')!r}, wanted denoiser")
    if header["schedule_hash"] != schedule_hash(sched):
        raise ParameterError(f"{path}: checkpoint was trained against a different schedule")
    model = Denoiser(ArchSpec.from_dict(header["arch"]), header["role"])
    set_flat_params(model.net, flat)
    return model


def fake_update_step(
    fake: Denoiser,
    z0_tgt: np.ndarray,
    sched: NoiseSchedule,
    cfg: TrainConfig,
    rng: np.random.Generator,
    cond: Condition | None = None,
) -> Denoiser:
    """One online update of the fake network on the current generated output.

    t is drawn fresh from the full [t_lo, t_hi] range regardless of any
    narrowed sampling the surrounding optimization uses, with a fresh eps.
    """
    if fake.role != "fake":
        raise ParameterError(f"fake_update_step needs role 'fake', got {fake.role!r}")
    cond = cond or Condition.null()
    t_hi = sched.T if cfg.t_hi is None else cfg.t_hi
    t = int(rng.integers(cfg.t_lo, t_hi + 1))
    z0_tgt = np.asarray(z0_tgt, dtype=np.float64)
    eps = rng.standard_normal(z0_tgt.shape)
    a, s = float(sched.alpha[t]), float(sched.sigma[t])
    zb = to_bchw(a * z0_tgt + s * eps)
    eb = to_bchw(eps)
    n = zb.shape[0]
    opt = fake._optimizer(cfg)
    opt.zero_grad()
    pred = _batch_predict(
        fake, zb, np.full(n, t), np.full(n, cond_index(fake.arch, cond))
    )
    loss = torch.mean((pred - eb) ** 2)
    if not torch.isfinite(loss):
        raise TrainingDivergedError("fake update loss non-finite")
    loss.backward()
    opt.step()
    return fake
