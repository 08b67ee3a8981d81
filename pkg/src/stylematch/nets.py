"""Network building blocks shared by the eps-predictors and the generator.

All weight initialization is driven by a numpy Generator so that runs are
reproducible end to end from a single integer seed; torch's own global RNG is
never consulted. Parameters live in float32; the numpy-facing API flattens
them to one vector for checkpointing and finite-difference probing.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import NumericGuardError, ParameterError


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, shape (B, dim)."""
    if dim % 2 != 0:
        raise ParameterError(f"embedding dim must be even, got {dim}")
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float32) / max(half - 1, 1)
    )
    args = t.reshape(-1, 1).to(torch.float32) * freqs.reshape(1, -1)
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class CondEpsNet(nn.Module):
    """Small conv net predicting eps from (z_t, t, condition id).

    depth conv layers at constant width; timestep + condition embeddings
    modulate every hidden layer with a scale-and-shift (FiLM). Additive
    shifts alone are too weak for the conditional branches to diverge: the
    condition must be able to re-gate feature channels, not just bias them.
    Scale projections and the final conv are zero-initialized, so an
    untrained net predicts exactly zero and modulation starts as identity.
    """

    def __init__(self, in_channels: int = 3, width: int = 24, depth: int = 4,
                 emb_dim: int = 32, n_cond: int = 6):
        super().__init__()
        if depth < 3 or depth > 5:
            raise ParameterError(f"depth must be in [3, 5], got {depth}")
        if width > 64:
            raise ParameterError(f"width capped at 64, got {width}")
        self.in_channels = in_channels
        self.width = width
        self.depth = depth
        self.emb_dim = emb_dim
        self.n_cond = n_cond
        self.cond_table = nn.Embedding(n_cond, emb_dim)
        convs = [nn.Conv2d(in_channels, width, 3, padding=1)]
        for _ in range(depth - 2):
            convs.append(nn.Conv2d(width, width, 3, padding=1))
        convs.append(nn.Conv2d(width, in_channels, 3, padding=1))
        self.convs = nn.ModuleList(convs)
        self.emb_proj = nn.ModuleList(
            [nn.Linear(emb_dim, width) for _ in range(depth - 1)]
        )
        self.scale_proj = nn.ModuleList(
            [nn.Linear(emb_dim, width) for _ in range(depth - 1)]
        )

    def forward(self, z_t: torch.Tensor, t: torch.Tensor, cond_id: torch.Tensor) -> torch.Tensor:
        if torch.any(cond_id < 0) or torch.any(cond_id >= self.n_cond):
            raise ParameterError(f"condition id outside embedding table of size {self.n_cond}")
        dtype = self.cond_table.weight.dtype
        emb = timestep_embedding(t, self.emb_dim).to(dtype) + self.cond_table(cond_id)
        h = z_t
        for i, conv in enumerate(self.convs[:-1]):
            scale = self.scale_proj[i](emb)[:, :, None, None]
            shift = self.emb_proj[i](emb)[:, :, None, None]
            h = F.silu(conv(h) * (1.0 + scale) + shift)
        return self.convs[-1](h)


class ResidualGenerator(nn.Module):
    """Residual encoder-decoder for one-step stylization.

    Three scales with stride-2 downsampling, skip connections, bilinear
    upsampling; the final conv is zero-initialized so the untrained net is
    the identity map.
    """

    def __init__(self, in_channels: int = 3, base: int = 16):
        super().__init__()
        if base * 4 > 64:
            raise ParameterError(f"base width {base} puts deepest scale over 64 channels")
        self.in_channels = in_channels
        self.base = base
        self.enc1 = nn.Conv2d(in_channels, base, 3, padding=1)
        self.enc2 = nn.Conv2d(base, base * 2, 3, stride=2, padding=1)
        self.enc3 = nn.Conv2d(base * 2, base * 4, 3, stride=2, padding=1)
        self.mid = nn.Conv2d(base * 4, base * 4, 3, padding=1)
        self.dec2 = nn.Conv2d(base * 4, base * 2, 3, padding=1)
        self.dec1 = nn.Conv2d(base * 2, base, 3, padding=1)
        self.out = nn.Conv2d(base, in_channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h1 = F.silu(self.enc1(x))
        h2 = F.silu(self.enc2(h1))
        h3 = F.silu(self.enc3(h2))
        h3 = F.silu(self.mid(h3))
        u2 = F.interpolate(h3, scale_factor=2, mode="bilinear", align_corners=False)
        u2 = F.silu(self.dec2(u2)) + h2
        u1 = F.interpolate(u2, scale_factor=2, mode="bilinear", align_corners=False)
        u1 = F.silu(self.dec1(u1)) + h1
        return x + self.out(u1)


def init_weights(module: nn.Module, rng: np.random.Generator) -> None:
    """He-style init for convs/linears from the numpy rng; zero biases;
    N(0, 0.2) embedding tables; final layer (attribute `out` or last conv in
    `convs`) zeroed so fresh networks are identity/zero maps; FiLM scale
    projections zeroed so modulation starts at identity."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            w = m.weight
            fan_in = w.shape[1] * (w.shape[2] * w.shape[3] if w.dim() == 4 else 1)
            std = math.sqrt(2.0 / fan_in)
            w.data = torch.from_numpy(
                rng.normal(0.0, std, size=tuple(w.shape)).astype(np.float32)
            )
            if m.bias is not None:
                m.bias.data.zero_()
        elif isinstance(m, nn.Embedding):
            m.weight.data = torch.from_numpy(
                rng.normal(0.0, 0.2, size=tuple(m.weight.shape)).astype(np.float32)
            )
    final = None
    if hasattr(module, "out"):
        final = module.out
    elif hasattr(module, "convs"):
        final = module.convs[-1]
    if final is not None:
        final.weight.data.zero_()
        if final.bias is not None:
            final.bias.data.zero_()
    if hasattr(module, "scale_proj"):
        for lin in module.scale_proj:
            lin.weight.data.zero_()
            lin.bias.data.zero_()


def get_flat_params(module: nn.Module) -> np.ndarray:
    """All parameters concatenated into one float64 vector (fixed order)."""
    return np.concatenate(
        [p.detach().numpy().astype(np.float64).ravel() for p in module.parameters()]
    )


def set_flat_params(module: nn.Module, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=np.float64)
    n = sum(p.numel() for p in module.parameters())
    if flat.shape != (n,):
        raise ParameterError(f"expected {n} parameters, got shape {flat.shape}")
    i = 0
    with torch.no_grad():
        for p in module.parameters():
            k = p.numel()
            p.copy_(torch.from_numpy(flat[i:i + k].reshape(tuple(p.shape))).to(p.dtype))
            i += k


def get_flat_grads(module: nn.Module) -> np.ndarray:
    out = []
    for p in module.parameters():
        g = p.grad
        out.append(
            np.zeros(p.numel()) if g is None else g.detach().numpy().astype(np.float64).ravel()
        )
    return np.concatenate(out)


def check_finite(module: nn.Module, what: str = "parameters") -> None:
    for p in module.parameters():
        if not torch.isfinite(p).all():
            raise NumericGuardError(f"non-finite {what} detected")
