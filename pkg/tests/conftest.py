"""Shared fixtures.

The expensive fixtures (pretrained real/style denoisers on the 240-image
corpus) are cached on disk under tests/_fixture_cache/ keyed by everything
that influences training: corpus spec, architecture, train config, schedule
hash. The first run trains them (~8 min CPU); later runs load checkpoints.
Delete the cache directory to force retraining.
"""

from __future__ import annotations

import json
import os

import numpy as np
import pytest
import torch

from stylematch.corpus import CorpusSpec, conditioning_dataset, gen_corpus, stylize_reference
from stylematch.denoiser import (
    ArchSpec,
    Denoiser,
    TrainConfig,
    load_denoiser,
    save_denoiser,
    train_denoiser,
)
from stylematch.schedule import make_schedule, schedule_hash
from stylematch.spectrum import high_band_power, mean_rapsd

torch.set_num_threads(1)

CACHE_DIR = os.path.join(os.path.dirname(__file__), "_fixture_cache")

# Small enough to pretrain on a CPU in minutes, large enough that the
# conditioning embeddings and the spectral gap are actually learned.
FIXTURE_SPEC = {"n_train": 240, "n_test": 40, "seed": 0}
REAL_TRAIN = {"iters": 3000, "seed": 5}
STYLE_TRAIN = {"iters": 1500, "seed": 6}


@pytest.fixture(scope="session")
def sched():
    return make_schedule(1000)


@pytest.fixture(scope="session")
def corpus():
    """(spec, train records, test records) for the shared toy corpus."""
    spec = CorpusSpec(**FIXTURE_SPEC)
    train, test = gen_corpus(spec)
    return spec, train, test


def _cached_denoiser(role: str, which: str, tc_kwargs: dict, corpus, sched):
    spec, train, _ = corpus
    os.makedirs(CACHE_DIR, exist_ok=True)
    key = {
        "spec": spec.to_dict(),
        "arch": ArchSpec().to_dict(),
        "train": tc_kwargs,
        "schedule": schedule_hash(sched),
        "which": which,
    }
    ckpt_p = os.path.join(CACHE_DIR, f"{role}.ckpt")
    meta_p = os.path.join(CACHE_DIR, f"{role}.json")
    if os.path.exists(ckpt_p) and os.path.exists(meta_p):
        with open(meta_p) as f:
            meta = json.load(f)
        if meta.get("key") == key:
            return load_denoiser(ckpt_p, sched), meta["losses"]
    ds = conditioning_dataset(train, spec, which)
    model = Denoiser(ArchSpec(), role)
    model, losses = train_denoiser(model, ds, sched, TrainConfig(**tc_kwargs))
    save_denoiser(ckpt_p, model, sched)
    with open(meta_p, "w") as f:
        json.dump({"key": key, "losses": losses}, f)
    return model, losses


@pytest.fixture(scope="session")
def real_pack(corpus, sched):
    """(real denoiser, loss history). Trained with Content/Null/Edit pairs."""
    return _cached_denoiser("real", "real", REAL_TRAIN, corpus, sched)


@pytest.fixture(scope="session")
def style_pack(corpus, sched):
    return _cached_denoiser("style", "style", STYLE_TRAIN, corpus, sched)


@pytest.fixture(scope="session")
def real_dn(real_pack):
    return real_pack[0]


@pytest.fixture(scope="session")
def style_dn(style_pack):
    return style_pack[0]


@pytest.fixture(scope="session")
def style_hb(corpus):
    """Mean high-band RAPSD power of the styled test corpus (the A4(b) anchor)."""
    spec, _, test = corpus
    return high_band_power(mean_rapsd([stylize_reference(r.image, spec) for r in test]))
