"""Seed derivation for reproducible, parallel-safe random streams.

Every random draw in the package comes from a :class:`numpy.random.Generator`
built from a 64-bit key obtained by folding labels (replication block,
sample size, ...) into the master seed with the SplitMix64 finalizer.  A
stream depends only on its labels, so results are identical whatever the
number of worker threads.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 output function: a bijective 64-bit avalanche mix."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *labels: int) -> int:
    """Fold integer labels into ``master``, one avalanche round per label."""
    if not 0 <= master <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {master}")
    key = mix64(master)
    for label in labels:
        key = mix64(key ^ ((int(label) * GOLDEN_GAMMA) & MASK64))
    return key


def substream(master: int, *labels: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, *labels)))
