"""Categorical distributions on the probability simplex and integer count vectors.

These two value types are the common currency of the package: observed data and
simulator outputs are ``CountVector``s, while models and empirical summaries
live on the simplex as ``Categorical``s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DimensionError, EmptyData
from .rng import generator

# Inputs are renormalized when the simplex defect is at most this; larger
# defects are rejected as bad data rather than silently fixed.
SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class Categorical:
    """A probability vector over ``k >= 2`` known categories.

    Entries are nonnegative and sum to one (renormalized on construction when
    the defect is within ``SIMPLEX_TOL``).  Zero entries are permitted: empirical
    summaries routinely have empty cells, and interiority is a per-model
    assumption, not a per-distribution one.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 2:
            raise DimensionError(f"need a 1-d probability vector with k >= 2, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite")
        if np.any(p < 0):
            if np.any(p < -SIMPLEX_TOL):
                raise ValueError(f"negative probability entry: min={p.min()}")
            p = np.clip(p, 0.0, None)
        total = p.sum()
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"probabilities sum to {total}, outside tolerance {SIMPLEX_TOL}")
        if total != 1.0:
            p = p / total
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @property
    def k(self) -> int:
        return self.probs.size

    def is_interior(self, eps: float = 0.0) -> bool:
        """True when every entry exceeds ``eps`` (lies inside the simplex)."""
        return bool(np.all(self.probs > eps))

    def to_csv_row(self) -> str:
        """CSV row of decimals with 17 significant digits."""
        return ",".join(format(x, ".17g") for x in self.probs)

    @staticmethod
    def uniform(k: int) -> "Categorical":
        return Categorical(np.full(k, 1.0 / k))

    @staticmethod
    def mixture(p: "Categorical", q: "Categorical") -> "Categorical":
        """The equal mixture with entries ``(p_i + q_i) / 2``."""
        if p.k != q.k:
            raise DimensionError(f"k mismatch: {p.k} vs {q.k}")
        return Categorical(0.5 * p.probs + 0.5 * q.probs)


@dataclass(frozen=True)
class CountVector:
    """Nonnegative integer counts per category; ``total`` is their sum."""

    counts: np.ndarray
    total: int = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise DimensionError(f"need a 1-d count vector, got shape {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            rounded = np.rint(c)
            if not np.all(np.abs(c - rounded) < 1e-9):
                raise ValueError("counts must be integers")
            c = rounded
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "total", int(c.sum()))

    @property
    def k(self) -> int:
        return self.counts.size

    def to_csv_row(self) -> str:
        return ",".join(str(int(x)) for x in self.counts)


def empirical_from_counts(c: CountVector) -> Categorical:
    """Relative category frequencies of a sample.

    Raises ``EmptyData`` when the sample is empty.
    """
    if c.total < 1:
        raise EmptyData("cannot form an empirical distribution from zero observations")
    return Categorical(c.counts / c.total)


def sample_multinomial(p: Categorical, n: int, seed: int) -> CountVector:
    """Draw ``Multinomial(n, p)`` counts, deterministic given ``seed``."""
    if n < 0:
        raise ValueError(f"sample size must be nonnegative, got {n}")
    if n == 0:
        return CountVector(np.zeros(p.k, dtype=np.int64))
    return CountVector(generator(seed).multinomial(n, p.probs))


def log_type_class_size(c: CountVector) -> float:
    """Log of the multinomial coefficient ``n! / prod_j n_j!``.

    Computed via log-gamma, so it does not overflow for totals up to 1e6.
    """
    if c.total < 1:
        raise EmptyData("type class size needs at least one observation")
    n = c.counts
    return float(gammaln(c.total + 1) - gammaln(n + 1).sum())
