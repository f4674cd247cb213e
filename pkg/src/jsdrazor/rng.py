"""Seeding utilities: a counter-based generator and a documented seed-splitting mix.

All randomness in the package flows through Philox (a counter-based generator
with a published algorithm), so outputs are bit-reproducible across platforms
for a fixed numpy version.  Derived streams are obtained by hashing the parent
seed together with integer indices using the SplitMix64 finalizer, so adding
replicates or reordering work never changes the seeds of existing replicates.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    """SplitMix64 finalizer (Steele, Lea & Flood 2014)."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def split_seed(seed: int, *indices: int) -> int:
    """Derive a child seed from ``seed`` and a path of integer indices.

    The mix is ``h <- mix64(h ^ mix64(index))`` applied left to right, with
    ``h`` starting at ``mix64(seed)``.  Distinct index paths give independent
    streams for practical purposes.
    """
    h = _mix64(seed & _MASK64)
    for ix in indices:
        h = _mix64(h ^ _mix64(ix & _MASK64))
    return h


def generator(seed: int) -> np.random.Generator:
    """A Philox-backed generator keyed by a 64-bit seed.

    Seeding goes through ``SeedSequence(seed)``, numpy's documented
    entropy-spreading path, so streams are platform-stable and construction
    never touches OS entropy.
    """
    return np.random.Generator(np.random.Philox(seed=seed & _MASK64))
