"""Deterministic seed derivation.

Every stochastic routine takes an explicit integer master seed and derives
independent child streams through ``numpy.random.SeedSequence`` spawn keys
(counter-based derivation).  Draw ``i`` of batch ``b`` always sees the same
stream no matter how batches are scheduled, so results are reproducible and
independent of worker count.
"""

from __future__ import annotations

import numpy as np


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    """Seed sequence for the child stream addressed by ``key``."""
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Generator for the child stream addressed by ``key``."""
    return np.random.default_rng(seed_sequence(seed, *key))


def child_seed(seed: int, *key: int) -> int:
    """Collapse a child stream address into a plain integer seed."""
    return int(seed_sequence(seed, *key).generate_state(1, dtype=np.uint64)[0])
