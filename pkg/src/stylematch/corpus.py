"""Procedural paired corpora: high-frequency "real" images and their styled
counterparts under a known, deterministic style operator.

Real images are smooth color gradients carrying one hard-edged shape (disk,
rectangle, stripes, ring; round-robin class assignment) plus an additive
white-noise field, so their spectra have substantial high-band power. The
style operator iterates blur -> palette quantization to (approximately) a
fixed point of that composition, then darkens strong edges by half a palette
step. Iterating matters: a single blur+quantize pass is far from idempotent
(requantizing the blurred staircase keeps moving strip boundaries), while the
relaxed posterization is an attractor, and the half-step edge ink is chosen
shallow enough that requantization strips and redraws it identically on a
second application. Styled images therefore show the reduced high-frequency
power that motivates the spectral analysis, and because the operator is
known, "did optimization move an image toward the style" is directly
measurable without any learned metric.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, asdict

import numpy as np
from scipy import ndimage

from .denoiser import Condition
from .errors import ParameterError
from .imgio import load_png, save_png
from .rng import make_rng

CLASS_NAMES = ("disk", "rectangle", "stripes", "ring")


@dataclass(frozen=True)
class CorpusSpec:
    size: int = 64
    n_train: int = 2000
    n_test: int = 200
    classes: tuple = CLASS_NAMES
    blur_sigma: float = 0.8
    palette_levels: int = 5
    edge_strength: float = 0.3
    noise_sigma: float = 0.1
    posterize_iters: int = 8
    seed: int = 0
    # Edit-conditioning targets replace the foreground with this fixed fill.
    # Keep it far from the color-distribution mean: under ambiguity the
    # unconditional posterior hedges toward the mean, and the Edit/Null
    # contrast lives in the gap between fill and hedge.
    edit_fill: tuple = (0.9, 0.9, 0.9)
    # Foreground colors are rejection-sampled until their distance to the
    # fill lands in this interval. The learned edit rule only fires near the
    # color regime it was trained in, so foregrounds too far from the fill
    # get flat relevance, and ones at the fill have no contrast at all.
    fg_shell: tuple = (0.25, 1.1)

    def __post_init__(self):
        if self.size < 8:
            raise ParameterError(f"size must be >= 8, got {self.size}")
        if self.n_train < 1 or self.n_test < 0:
            raise ParameterError("need n_train >= 1, n_test >= 0")
        bad = [c for c in self.classes if c not in CLASS_NAMES]
        if bad or not self.classes:
            raise ParameterError(f"unknown classes {bad}; choose from {CLASS_NAMES}")
        if self.blur_sigma < 0 or self.edge_strength < 0 or self.noise_sigma < 0:
            raise ParameterError("blur/edge/noise parameters must be >= 0")
        if self.palette_levels < 2:
            raise ParameterError("palette_levels must be >= 2")
        if self.posterize_iters < 1:
            raise ParameterError("posterize_iters must be >= 1")
        if len(self.edit_fill) != 3 or any(abs(v) > 1 for v in self.edit_fill):
            raise ParameterError("edit_fill must be 3 channel values in [-1, 1]")
        if len(self.fg_shell) != 2 or not 0 <= self.fg_shell[0] < self.fg_shell[1]:
            raise ParameterError("fg_shell must be 0 <= lo < hi")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classes"] = list(self.classes)
        d["edit_fill"] = list(self.edit_fill)
        d["fg_shell"] = list(self.fg_shell)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        d = dict(d)
        d["classes"] = tuple(d.get("classes", CLASS_NAMES))
        for key in ("edit_fill", "fg_shell"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class ImageRecord:
    image: np.ndarray      # HWC in [-1, 1]
    class_id: int
    fg_mask: np.ndarray    # HW bool, foreground shape support


def _rand_color(rng) -> np.ndarray:
    return rng.uniform(-0.9, 0.9, size=3)


def _fg_color(spec: CorpusSpec, rng) -> np.ndarray:
    """Foreground color, constrained to the fg_shell distance band around
    the edit fill (see CorpusSpec). Rejection sampling keeps the in-band
    distribution uniform."""
    fill = np.asarray(spec.edit_fill, dtype=np.float64)
    lo, hi = spec.fg_shell
    for _ in range(1000):
        c = _rand_color(rng)
        if lo <= np.linalg.norm(c - fill) <= hi:
            return c
    raise ParameterError(
        f"no color in [-0.9, 0.9]^3 lies within {spec.fg_shell} of {spec.edit_fill}"
    )


def _draw_shape(kind: str, n: int, rng) -> np.ndarray:
    """Hard-edged boolean mask for one shape instance."""
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64) / n
    if kind == "disk":
        cy, cx = rng.uniform(0.3, 0.7, size=2)
        r = rng.uniform(0.15, 0.3)
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if kind == "rectangle":
        cy, cx = rng.uniform(0.3, 0.7, size=2)
        hh, hw = rng.uniform(0.1, 0.25, size=2)
        return (np.abs(yy - cy) <= hh) & (np.abs(xx - cx) <= hw)
    if kind == "stripes":
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(4.0, 9.0)
        phase = rng.uniform(0, 2 * np.pi)
        u = xx * np.cos(theta) + yy * np.sin(theta)
        return np.sin(2 * np.pi * freq * u + phase) > 0
    if kind == "ring":
        cy, cx = rng.uniform(0.35, 0.65, size=2)
        r1 = rng.uniform(0.18, 0.32)
        r0 = r1 * rng.uniform(0.55, 0.8)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        return (d2 <= r1 * r1) & (d2 >= r0 * r0)
    raise ParameterError(f"unknown shape class {kind!r}")


def _gen_one(spec: CorpusSpec, class_id: int, rng) -> ImageRecord:
    n = spec.size
    top, bottom = _rand_color(rng), _rand_color(rng)
    ramp = np.linspace(0.0, 1.0, n)[:, None, None]
    img = top[None, None, :] * (1 - ramp) + bottom[None, None, :] * ramp
    img = np.broadcast_to(img, (n, n, 3)).copy()
    mask = _draw_shape(spec.classes[class_id], n, rng)
    img[mask] = _fg_color(spec, rng)
    img += rng.normal(0.0, spec.noise_sigma, size=img.shape)
    return ImageRecord(image=np.clip(img, -1.0, 1.0), class_id=class_id, fg_mask=mask)


def gen_real(spec: CorpusSpec, rng: np.random.Generator, n: int) -> list[ImageRecord]:
    """n records, classes assigned round-robin (counts balanced within 1)."""
    return [_gen_one(spec, i % len(spec.classes), rng) for i in range(n)]


def gen_corpus(spec: CorpusSpec) -> tuple[list[ImageRecord], list[ImageRecord]]:
    """(train, test) record lists, fully determined by spec.seed."""
    train = gen_real(spec, make_rng(spec.seed, 31), spec.n_train)
    test = gen_real(spec, make_rng(spec.seed, 37), spec.n_test)
    return train, test


def _quantize(x: np.ndarray, levels: int) -> np.ndarray:
    # levels >= 256 is declared a no-op: 8-bit PNG output cannot resolve finer.
    if levels >= 256:
        return x
    u = np.clip((x + 1.0) / 2.0, 0.0, 1.0)
    q = np.round(u * (levels - 1)) / (levels - 1)
    return q * 2.0 - 1.0


def _blur(x: np.ndarray, sigma: float) -> np.ndarray:
    return np.stack(
        [ndimage.gaussian_filter(x[:, :, c], sigma, mode="reflect")
         for c in range(x.shape[2])],
        axis=2,
    )


def stylize_reference(x: np.ndarray, spec: CorpusSpec, mask: np.ndarray | None = None) -> np.ndarray:
    """The ground-truth style operator: relaxed posterization plus edge ink.

    blur+quantize is iterated posterize_iters times so the output sits at a
    fixed point of the composition; a second application then re-enters the
    same attractor. Edge ink darkens pixels whose 3x3 window contrast g
    satisfies edge_strength * g > 0.5 by half a palette step. Half a step is
    below the requantization margin, so on reapplication the ink is stripped
    by the first quantize and redrawn from the same relaxed image.

    Deterministic in (x, spec); never consulted by the optimization pipeline,
    only by corpus construction and evaluation. `mask` restricts the effect
    to the foreground (relevance fixtures)."""
    x = np.asarray(x, dtype=np.float64)
    out = x
    for _ in range(spec.posterize_iters):
        if spec.blur_sigma > 0:
            out = _blur(out, spec.blur_sigma)
        out = _quantize(out, spec.palette_levels)
    if spec.edge_strength > 0:
        g = np.stack(
            [ndimage.maximum_filter(out[:, :, c], size=3)
             - ndimage.minimum_filter(out[:, :, c], size=3)
             for c in range(out.shape[2])],
            axis=2,
        ).max(axis=2)
        ink = spec.edge_strength * g > 0.5
        depth = 1.0 / (spec.palette_levels - 1) if spec.palette_levels < 256 else 0.25
        out = np.where(ink[:, :, None], out - depth, out)
    out = np.clip(out, -1.0, 1.0)
    if mask is not None:
        out = np.where(mask[:, :, None], out, x)
    return out


def edit_target(rec: ImageRecord, spec: CorpusSpec) -> np.ndarray:
    """The image the Edit conditioning is trained to denoise toward.

    Foreground pixels are replaced by the fixed fill color; background is
    untouched. Real foreground colors are drawn fresh per image, so at a
    noised input the fill is not recoverable from pixels alone and the
    denoiser must consult the Edit embedding to beat the unconditional
    hedge. That pressure is what localizes |eps(Edit) - eps(Null)| on the
    shape support; a foreground edit the net can read off the pixels (e.g.
    restyling) leaves the conditioning unused and the difference map flat.
    """
    fill = np.asarray(spec.edit_fill, dtype=np.float64)
    return np.where(rec.fg_mask[:, :, None], fill, rec.image)


def conditioning_dataset(records: list[ImageRecord], spec: CorpusSpec, which: str):
    """Training pairs for the pretrained networks.

    which="real": (x, Content(k)) + (x, Null) + (edit_target, Edit(0)) per record.
    which="style": (styled, Content(k)) + (styled, Null) per record.
    """
    out = []
    for rec in records:
        k = rec.class_id
        if which == "real":
            out.append((rec.image, Condition.content(k)))
            out.append((rec.image, Condition.null()))
            out.append((edit_target(rec, spec), Condition.edit(0)))
        elif which == "style":
            styled = stylize_reference(rec.image, spec)
            out.append((styled, Condition.content(k)))
            out.append((styled, Condition.null()))
        else:
            raise ParameterError(f"which must be real|style, got {which!r}")
    return out


def write_corpus(outdir, spec: CorpusSpec) -> dict:
    """Write PNGs + manifest.json under outdir; returns the manifest dict."""
    train, test = gen_corpus(spec)
    for sub in ("real", "style"):
        os.makedirs(os.path.join(outdir, sub), exist_ok=True)
    entries = []
    for split, recs in (("train", train), ("test", test)):
        for i, rec in enumerate(recs):
            rp = os.path.join("real", f"{split}_{i:05d}.png")
            sp = os.path.join("style", f"{split}_{i:05d}.png")
            save_png(os.path.join(outdir, rp), rec.image)
            save_png(os.path.join(outdir, sp), stylize_reference(rec.image, spec))
            entries.append({"split": split, "real": rp, "style": sp, "class_id": rec.class_id})
    manifest = {"spec": spec.to_dict(), "images": entries}
    with open(os.path.join(outdir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def manifest_hash(manifest: dict) -> str:
    return hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()[:16]


def load_manifest(path) -> dict:
    with open(path) as f:
        return json.load(f)


def load_corpus_images(manifest_path, split: str, which: str = "real"):
    """[(image, class_id)] read back from PNG files listed in the manifest."""
    manifest = load_manifest(manifest_path)
    root = os.path.dirname(os.path.abspath(manifest_path))
    out = []
    for e in manifest["images"]:
        if e["split"] != split:
            continue
        out.append((load_png(os.path.join(root, e[which])), int(e["class_id"])))
    return out
