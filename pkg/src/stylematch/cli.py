"""Command-line surface.

Verbs: gen-corpus, pretrain, stylize, distill, rapsd, verify, ablate. Each
takes a JSON config (--config) plus a few overriding flags; every output
directory receives a copy of the exact config used (provenance), and every
command is deterministic given the seeds in its config.

Exit codes: 0 success; 1 validation error (bad parameters/shapes/configs);
2 numeric failure (guard tripped, training diverged, verification failed);
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import torch

from .corpus import CorpusSpec, gen_corpus, load_corpus_images, load_manifest, manifest_hash, stylize_reference, write_corpus
from .denoiser import ArchSpec, Condition, Denoiser, TrainConfig, copy_denoiser, load_denoiser, save_denoiser, train_denoiser
from .errors import NumericGuardError, ParameterError, ShapeError, TrainingDivergedError
from .generator import DistillConfig, Generator, recon_warmup, save_generator, stylize_once, train_generator
from .imgio import load_png, save_gray_png, save_png, save_raw
from .relevance import relevance_map, relevance_to_gray
from .rng import make_rng
from .schedule import NoiseSchedule, make_schedule
from .spectrum import dct_band_rel_l2, high_band_power, mean_rapsd, rapsd
from .stylize import Networks, SmsConfig, optimize_image, write_trajectory_csv
from .verify import run_all


def _require_file(path, what: str):
    if not os.path.isfile(path):
        raise ParameterError(f"{what} not found: {path}")


def _outdir(cfg: dict) -> str:
    out = cfg.get("out")
    if not out:
        raise ParameterError("config needs an 'out' directory")
    os.makedirs(out, exist_ok=True)
    return out


def _write_provenance(outdir: str, cfg: dict) -> None:
    with open(os.path.join(outdir, "config.json"), "w") as f:
        json.dump(cfg, f, indent=1, sort_keys=True)


def _write_loss_csv(path, losses) -> None:
    with open(path, "w") as f:
        f.write("step,loss\n")
        for i, v in enumerate(losses):
            f.write(f"{i},{v:.10g}\n")


def _schedule_from_cfg(cfg: dict) -> NoiseSchedule:
    s = cfg.get("schedule", {})
    return make_schedule(
        int(s.get("T", 1000)), float(s.get("beta_min", 1e-4)), float(s.get("beta_max", 2e-2))
    )


def _load_schedule(ckpt_dir: str) -> NoiseSchedule:
    path = os.path.join(ckpt_dir, "schedule.json")
    _require_file(path, "schedule.json")
    with open(path) as f:
        return NoiseSchedule.from_json(f.read())


def _sms_from_cfg(d: dict) -> SmsConfig:
    return SmsConfig(**d)


# ------------------------------------------------------------------ commands


def cmd_gen_corpus(cfg: dict) -> int:
    outdir = _outdir(cfg)
    spec = CorpusSpec.from_dict(cfg.get("spec", {}))
    manifest = write_corpus(outdir, spec)
    _write_provenance(outdir, cfg)
    print(f"wrote {len(manifest['images'])} image pairs to {outdir}")
    print(f"manifest hash: {manifest_hash(manifest)}")
    return 0


def _load_train_sets(manifest_path: str):
    """Conditioning datasets for the two pretrained networks, from a corpus
    manifest. Images come from the PNGs; Edit targets recompute the fixed
    foreground fill on them, with masks regenerated from the manifest seed
    (mask construction is deterministic, so they match the PNGs exactly)."""
    manifest = load_manifest(manifest_path)
    spec = CorpusSpec.from_dict(manifest["spec"])
    real_pairs = load_corpus_images(manifest_path, "train", "real")
    style_pairs = load_corpus_images(manifest_path, "train", "style")
    train, _ = gen_corpus(spec)
    fill = np.asarray(spec.edit_fill, dtype=np.float64)
    real_set, style_set = [], []
    for rec, (img, k), (sty, _) in zip(train, real_pairs, style_pairs):
        real_set.append((img, Condition.content(k)))
        real_set.append((img, Condition.null()))
        real_set.append((np.where(rec.fg_mask[:, :, None], fill, img), Condition.edit(0)))
        style_set.append((sty, Condition.content(k)))
        style_set.append((sty, Condition.null()))
    return spec, real_set, style_set


def cmd_pretrain(cfg: dict) -> int:
    manifest_path = cfg.get("corpus", "")
    _require_file(manifest_path, "corpus manifest")
    outdir = _outdir(cfg)
    sched = _schedule_from_cfg(cfg)
    arch = ArchSpec(**cfg.get("arch", {}))
    tc = TrainConfig(**cfg.get("train", {}))
    spec, real_set, style_set = _load_train_sets(manifest_path)
    if arch.n_content < len(spec.classes):
        raise ParameterError(
            f"arch.n_content={arch.n_content} < corpus classes {len(spec.classes)}"
        )

    real = Denoiser(arch, "real", seed=tc.seed)
    real, real_losses = train_denoiser(real, real_set, sched, tc)
    save_denoiser(os.path.join(outdir, "real.ckpt"), real, sched)
    _write_loss_csv(os.path.join(outdir, "real_loss.csv"), real_losses)

    style = Denoiser(arch, "style", seed=tc.seed + 1)
    style, style_losses = train_denoiser(style, style_set, sched, tc)
    save_denoiser(os.path.join(outdir, "style.ckpt"), style, sched)
    _write_loss_csv(os.path.join(outdir, "style_loss.csv"), style_losses)

    with open(os.path.join(outdir, "schedule.json"), "w") as f:
        f.write(sched.to_json())
    _write_provenance(outdir, cfg)
    if real_losses:
        print(f"real: final loss {real_losses[-1]:.4f}")
    if style_losses:
        print(f"style: final loss {style_losses[-1]:.4f}")
    return 0


def _resolve_input_image(cfg: dict):
    """-> (image, class_id or None). Accepts {'path':..., 'class_id':...} or
    {'test_index': i} against the corpus manifest."""
    img_cfg = cfg.get("image")
    if isinstance(img_cfg, str):
        img_cfg = {"path": img_cfg}
    if not isinstance(img_cfg, dict):
        raise ParameterError("config needs 'image': path or {path|test_index}")
    if "path" in img_cfg:
        _require_file(img_cfg["path"], "input image")
        img = load_png(img_cfg["path"])
        return img, img_cfg.get("class_id")
    if "test_index" in img_cfg:
        manifest_path = cfg.get("corpus", "")
        _require_file(manifest_path, "corpus manifest")
        pairs = load_corpus_images(manifest_path, "test", "real")
        i = int(img_cfg["test_index"])
        if not (0 <= i < len(pairs)):
            raise ParameterError(f"test_index {i} outside corpus test split of {len(pairs)}")
        return pairs[i]
    raise ParameterError("image config needs 'path' or 'test_index'")


def _load_networks(ckpt_dir: str, sched: NoiseSchedule) -> Networks:
    real_p = os.path.join(ckpt_dir, "real.ckpt")
    style_p = os.path.join(ckpt_dir, "style.ckpt")
    _require_file(real_p, "real checkpoint")
    _require_file(style_p, "style checkpoint")
    real = load_denoiser(real_p, sched)
    style = load_denoiser(style_p, sched)
    fake = copy_denoiser(real, "fake")
    return Networks(style=style, fake=fake, real=real)


def cmd_stylize(cfg: dict) -> int:
    ckpt_dir = cfg.get("checkpoints", "")
    outdir = _outdir(cfg)
    sched = _load_schedule(ckpt_dir)
    networks = _load_networks(ckpt_dir, sched)
    src, class_id = _resolve_input_image(cfg)
    sms = _sms_from_cfg(cfg.get("sms", {}))
    cond_src = Condition.content(int(class_id)) if class_id is not None else Condition.null()

    def snapshot(it, state):
        save_png(os.path.join(outdir, f"iter_{it:05d}.png"), np.clip(state.image, -1, 1))
        if sms.use_relevance and networks.real is not None:
            R = relevance_map(
                networks.real, src, 300, networks.edit, networks.null, sched,
                make_rng(sms.seed, 97, it),
            )
            save_gray_png(os.path.join(outdir, f"relevance_{it:05d}.png"), relevance_to_gray(R))

    save_png(os.path.join(outdir, "input.png"), src)
    try:
        out, trajectory = optimize_image(
            src, sms, networks, sched, cond_src=cond_src,
            snapshot_hook=snapshot if sms.snapshot_every else None,
        )
    except TrainingDivergedError as e:
        state = getattr(e, "state", None)
        if state is not None:
            save_raw(os.path.join(outdir, "diverged_image.raw"), np.nan_to_num(state.image))
            with open(os.path.join(outdir, "diverged.json"), "w") as f:
                json.dump({"iteration": state.iter_cur, "error": str(e)}, f, indent=1)
        raise
    save_png(os.path.join(outdir, "output.png"), out)
    write_trajectory_csv(os.path.join(outdir, "trajectory.csv"), trajectory)
    _write_provenance(outdir, cfg)
    print(f"stylized image written to {os.path.join(outdir, 'output.png')}")
    return 0


def cmd_distill(cfg: dict) -> int:
    ckpt_dir = cfg.get("checkpoints", "")
    manifest_path = cfg.get("corpus", "")
    _require_file(manifest_path, "corpus manifest")
    outdir = _outdir(cfg)
    sched = _load_schedule(ckpt_dir)
    networks = _load_networks(ckpt_dir, sched)
    dataset = load_corpus_images(manifest_path, "train", "real")

    dcfg_raw = dict(cfg.get("distill", {}))
    sms = _sms_from_cfg(dcfg_raw.pop("sms", {}))
    dcfg = DistillConfig(sms=sms, **dcfg_raw)

    gen = Generator(seed=dcfg.seed)
    warm_losses = recon_warmup(gen, [x for x, _ in dataset], dcfg)
    _write_loss_csv(os.path.join(outdir, "warmup_loss.csv"), warm_losses)
    trajectory = train_generator(gen, dataset, networks, sched, dcfg)
    write_trajectory_csv(os.path.join(outdir, "trajectory.csv"), trajectory)
    save_generator(os.path.join(outdir, "generator.ckpt"), gen, sched)

    test = load_corpus_images(manifest_path, "test", "real")
    for i, (x, _) in enumerate(test[: int(cfg.get("n_samples", 4))]):
        save_png(os.path.join(outdir, f"sample_{i:03d}_in.png"), x)
        save_png(os.path.join(outdir, f"sample_{i:03d}_out.png"), stylize_once(gen, x))
    _write_provenance(outdir, cfg)
    print(f"generator written to {os.path.join(outdir, 'generator.ckpt')}")
    return 0


def _corpus_curve(d: str):
    files = sorted(
        os.path.join(d, f) for f in os.listdir(d) if f.lower().endswith(".png")
    )
    if not files:
        raise ParameterError(f"no PNG images in {d}")
    return mean_rapsd([load_png(p) for p in files])


def cmd_rapsd(cfg: dict) -> int:
    dirs = cfg.get("dirs")
    if not dirs:
        raise ParameterError("config needs 'dirs': {name: image-directory}")
    outdir = _outdir(cfg)
    curves = {}
    for name, d in dirs.items():
        if not os.path.isdir(d):
            raise ParameterError(f"not a directory: {d}")
        curves[name] = _corpus_curve(d)
    names = list(curves)
    freqs = curves[names[0]].freqs
    with open(os.path.join(outdir, "rapsd.csv"), "w") as f:
        f.write("frequency," + ",".join(names) + "\n")
        for i in range(len(freqs)):
            row = ",".join(f"{curves[n].power[i]:.10g}" for n in names)
            f.write(f"{freqs[i]:.10g},{row}\n")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fmax = float(freqs[-1])
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    views = [("full", 0.0, fmax), ("low band", 0.0, 0.25 * fmax), ("high band", 0.75 * fmax, fmax)]
    for ax, (title, lo, hi) in zip(axes, views):
        sel = (freqs >= lo) & (freqs <= hi)
        for n in names:
            ax.plot(freqs[sel], curves[n].power[sel], label=n)
        ax.set_yscale("log")
        ax.set_title(title)
        ax.set_xlabel("normalized frequency")
    axes[0].set_ylabel("mean power")
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, "rapsd.png"), dpi=120)
    plt.close(fig)
    _write_provenance(outdir, cfg)
    for n in names:
        print(f"{n}: high-band power {high_band_power(curves[n]):.6g}")
    return 0


def cmd_verify(cfg: dict) -> int:
    outdir = _outdir(cfg)
    report = run_all(seed=int(cfg.get("seed", 0)))
    with open(os.path.join(outdir, "verify_report.json"), "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
    _write_provenance(outdir, cfg)
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
    if not report["passed"]:
        raise NumericGuardError("verification suite failed; see verify_report.json")
    return 0


ABLATE_MODES = ("lambda", "sampler", "components")


def cmd_ablate(cfg: dict) -> int:
    mode = cfg.get("mode")
    if mode not in ABLATE_MODES:
        raise ParameterError(f"ablate mode must be one of {ABLATE_MODES}")
    ckpt_dir = cfg.get("checkpoints", "")
    manifest_path = cfg.get("corpus", "")
    _require_file(manifest_path, "corpus manifest")
    outdir = _outdir(cfg)
    sched = _load_schedule(ckpt_dir)
    base = dict(cfg.get("sms", {}))
    indices = [int(i) for i in cfg.get("test_indices", [0, 1, 2, 3, 4])]
    pairs = load_corpus_images(manifest_path, "test", "real")
    manifest = load_manifest(manifest_path)
    spec = CorpusSpec.from_dict(manifest["spec"])

    if mode == "lambda":
        variants = [(f"lam_{v}", {"lam": float(v)}) for v in cfg.get("values", [0.1, 1.0, 10.0])]
    elif mode == "sampler":
        variants = [(s, {"sampler": s}) for s in
                    ("adaptive_narrowing", "uniform_random", "linear_decreasing")]
    else:
        variants = [
            ("full", {}),
            ("no_freq", {"use_freq": False}),
            ("no_relevance", {"use_relevance": False}),
            ("no_freq_no_relevance", {"use_freq": False, "use_relevance": False}),
        ]

    rows = []
    for name, patch in variants:
        for idx in indices:
            if not (0 <= idx < len(pairs)):
                raise ParameterError(f"test index {idx} out of range")
            src, class_id = pairs[idx]
            networks = _load_networks(ckpt_dir, sched)
            sms = _sms_from_cfg({**base, **patch})
            out, traj = optimize_image(
                src, sms, networks, sched, cond_src=Condition.content(class_id)
            )
            ref = stylize_reference(src, spec)
            rows.append({
                "variant": name,
                "image": idx,
                "rms_to_source": float(np.sqrt(np.mean((out - src) ** 2))),
                "rms_to_reference_style": float(np.sqrt(np.mean((out - ref) ** 2))),
                "low_band_rel_l2": dct_band_rel_l2(out, src, 0.2),
                "high_band_power": high_band_power(rapsd(out)),
                "final_L_total": traj[-1][4],
            })
            save_png(os.path.join(outdir, f"{name}_img{idx}.png"), out)
    cols = ["variant", "image", "rms_to_source", "rms_to_reference_style",
            "low_band_rel_l2", "high_band_power", "final_L_total"]
    with open(os.path.join(outdir, "summary.csv"), "w") as f:
        f.write(",".join(cols) + "\n")
        for r in rows:
            f.write(",".join(
                f"{r[c]:.10g}" if isinstance(r[c], float) else str(r[c]) for c in cols
            ) + "\n")
    _write_provenance(outdir, cfg)
    print(f"{len(rows)} ablation runs written to {outdir}")
    return 0


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "pretrain": cmd_pretrain,
    "stylize": cmd_stylize,
    "distill": cmd_distill,
    "rapsd": cmd_rapsd,
    "verify": cmd_verify,
    "ablate": cmd_ablate,
}


def _parse_args(argv):
    p = argparse.ArgumentParser(prog="stylematch", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output directory (overrides config)")
        sp.add_argument("--seed", type=int, help="seed override")
    return p.parse_args(argv)


def main(argv=None) -> int:
    torch.set_num_threads(1)
    args = _parse_args(argv)
    try:
        cfg = {}
        if args.config:
            _require_file(args.config, "config file")
            try:
                with open(args.config) as f:
                    cfg = json.load(f)
            except json.JSONDecodeError as e:
                raise ParameterError(f"config is not valid JSON: {e}") from e
        if args.out:
            cfg["out"] = args.out
        if args.seed is not None:
            cfg["seed"] = args.seed
            if "spec" in cfg:
                cfg["spec"]["seed"] = args.seed
            if "sms" in cfg:
                cfg["sms"]["seed"] = args.seed
            if "train" in cfg:
                cfg["train"]["seed"] = args.seed
        cfg.setdefault("seed", 0)  # no implicit nondeterminism anywhere
        return COMMANDS[args.command](cfg)
    except (ParameterError, ShapeError, TypeError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 1
    except (NumericGuardError, TrainingDivergedError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
