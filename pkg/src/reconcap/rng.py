"""Counter-based random streams.

Every random draw in the library is produced by a Philox generator whose key
is derived from an explicit integer path (master seed, stream tag, realization
index, step index, ...).  Generators are constructed per draw and never shared,
so any draw can be replayed in isolation and concurrent consumers cannot
perturb each other.
"""

from __future__ import annotations

import numpy as np

# Stream tags keep unrelated draw sites on disjoint key paths.
STREAM_STEP_NOISE = 0
STREAM_INIT = 1
STREAM_TASK = 2
STREAM_PROBE = 3
STREAM_ORACLE = 4


def stream(master_seed: int, *path: int) -> np.random.Generator:
    """Return a fresh Generator keyed by (master_seed, *path).

    The key is hashed from the integer path via SeedSequence, then drives a
    Philox counter-based bit generator.  Identical paths give bit-identical
    streams on a given platform; distinct paths give statistically independent
    streams.
    """
    entropy = (int(master_seed),) + tuple(int(p) for p in path)
    key = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def normal_draw(master_seed: int, tag: int, realization: int, step: int, dim: int) -> np.ndarray:
    """Standard normal vector for one (stream, realization, step) triple."""
    return stream(master_seed, tag, realization, step).standard_normal(dim)
