"""Deterministic RNG substreams.

Every random draw in the package comes from a ``numpy.random.Generator``
derived from a single integer master seed plus a tuple of integer keys
(region index, test index, replicate block, ...). Derivation is stateless,
so the same keys always give the same stream no matter which thread asks
for it or in which order.
"""

from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]


def seed_sequence(seed: SeedLike, *keys: int) -> np.random.SeedSequence:
    """Return the seed sequence for ``seed`` extended by ``keys``."""
    if isinstance(seed, np.random.SeedSequence):
        base_entropy = seed.entropy
        base_key = tuple(seed.spawn_key)
    else:
        if isinstance(seed, bool) or int(seed) != seed or seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
        base_entropy = int(seed)
        base_key = ()
    return np.random.SeedSequence(base_entropy, spawn_key=base_key + tuple(int(k) for k in keys))


def substream(seed: SeedLike, *keys: int) -> np.random.Generator:
    """Independent generator for the substream identified by ``keys``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))
