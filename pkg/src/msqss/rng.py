"""Reproducible, splittable random streams.

Every stochastic operation in the package takes a ``numpy.random.Generator``
explicitly.  Generators are derived from a master 64-bit seed and a *spawn
key* (a tuple of non-negative integers) through ``numpy.random.SeedSequence``
feeding a counter-based Philox bit generator.  The stream for a given key is
a pure function of ``(seed, key)``, so trial ``k`` of an experiment, or the
receiver-``i`` stream inside that trial, can be regenerated in isolation
without replaying anything that came before it.

Key layout used throughout the package::

    (trial, receiver, purpose)

where ``purpose`` is one of the integer tags below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# purpose tags; values are part of the reproducibility contract
ALICE_PREPARE = 0
RECEIVER = 1
EVE = 2
ALICE_MEASURE = 3
CHECK = 4
KEY = 5

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeedTree:
    """A node in the deterministic stream hierarchy."""

    seed: int
    key: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if any(k < 0 for k in self.key):
            raise ValueError("spawn key entries must be non-negative")

    def child(self, *key: int) -> SeedTree:
        return SeedTree(self.seed, self.key + tuple(int(k) for k in key))

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key + tuple(int(k) for k in key))
        return np.random.Generator(np.random.Philox(ss))


def trial_tree(seed: int, trial: int) -> SeedTree:
    """Root of the streams used by trial ``trial`` of an experiment seeded with ``seed``."""
    return SeedTree(seed).child(trial)
