"""Seeded random streams.

Every stream is a PCG64 generator keyed by ``SeedSequence(seed, spawn_key)``.
Keys used by the interpreter:

* run ``i`` of a batch:            ``(i,)``
* a component at tree path ``p``:  ``run_key + p`` (``p`` is a tuple of 0/1)
* the scheduler of a run:          ``run_key + (SCHEDULER,)``

Keys only depend on the master seed and structural positions, so a batch is
reproducible regardless of how runs are distributed over workers.
"""
from __future__ import annotations

import numpy as np

SCHEDULER = 2**32 - 1
MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed: int, key=()) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(check_seed(seed), spawn_key=tuple(key))))


def uniform(rng: np.random.Generator) -> float:
    """A draw of U in [0, 1)."""
    return float(rng.random())


def brownian_increment(dim: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """``dim`` independent N(0, dt) samples."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    return np.sqrt(dt) * rng.standard_normal(dim)
