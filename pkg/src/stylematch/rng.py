"""Deterministic random-number plumbing.

Every stochastic routine in the package takes an explicit
`numpy.random.Generator`. Generators are derived from a user seed plus an
integer stream path, so independent parts of a run (corpus, init, training
draws, ...) get decorrelated streams while the whole run stays reproducible
from a single seed.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for (seed, stream path); same arguments give identical draws."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """n decorrelated child generators, consumed deterministically from rng."""
    seeds = rng.integers(0, 2**63, size=n, dtype=np.int64)
    return [np.random.Generator(np.random.PCG64(int(s))) for s in seeds]
