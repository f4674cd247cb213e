"""Divergences between categorical distributions: KLD, symmetric JSD, and friends.

All values are in nats.  The Jensen-Shannon divergence of ``P`` and ``Q`` is

    jsd(P, Q) = kl(P, M)/2 + kl(Q, M)/2,    M = (P + Q)/2,

which is symmetric, bounded by ``ln 2``, and whose square root is a metric.
For numerical robustness near the simplex boundary the implementation computes
the equivalent entropy form ``H(M) - H(P)/2 - H(Q)/2``; the definitional
mixture form is kept in the test suite as an oracle.

``+inf`` is a regular return value of ``kl`` (support violation), not an
exception, so inequality checks can treat it uniformly.
"""

from __future__ import annotations

import math

import numpy as np

from .categorical import Categorical
from .errors import DimensionError, DomainError

LN2 = math.log(2.0)


def _check_pair(p: Categorical, q: Categorical) -> None:
    if p.k != q.k:
        raise DimensionError(f"k mismatch: {p.k} vs {q.k}")


def entropy(p: Categorical) -> float:
    """Shannon entropy in nats, with the convention 0 ln 0 = 0."""
    v = p.probs
    nz = v > 0
    return float(-np.dot(v[nz], np.log(v[nz])))


def kl(p: Categorical, q: Categorical) -> float:
    """Kullback-Leibler divergence ``sum_i p_i ln(p_i / q_i)``.

    Returns ``+inf`` when some ``p_i > 0`` has ``q_i = 0``.
    """
    _check_pair(p, q)
    pv, qv = p.probs, q.probs
    nz = pv > 0
    if np.any(qv[nz] == 0):
        return math.inf
    return max(0.0, float(np.dot(pv[nz], np.log(pv[nz] / qv[nz]))))


def jsd(p: Categorical, q: Categorical) -> float:
    """Symmetric Jensen-Shannon divergence; always finite, in [0, ln 2]."""
    _check_pair(p, q)
    m = 0.5 * p.probs + 0.5 * q.probs
    hm = float(-np.dot(m[m > 0], np.log(m[m > 0])))
    # grouped so the expression is exactly symmetric in (p, q)
    value = hm - 0.5 * (entropy(p) + entropy(q))
    return min(max(0.0, value), LN2)


def jsd_sqrt(p: Categorical, q: Categorical) -> float:
    """Square root of the JSD; a metric on the simplex."""
    return math.sqrt(jsd(p, q))


def total_variation(p: Categorical, q: Categorical) -> float:
    """Variation distance ``sum_i |p_i - q_i|``, in [0, 2]."""
    _check_pair(p, q)
    return float(np.abs(p.probs - q.probs).sum())


def phi_family(u: float) -> tuple[float, float, float]:
    """The convex generator of the JSD and its first two derivatives.

        phi(u)   = u ln(u)/2 - (u + 1) ln((u + 1)/2)/2
        phi'(u)  = ln(2u / (u + 1))/2
        phi''(u) = 1 / (2u(u + 1))

    Defined for ``u > 0``; the 0-limit conventions live inside ``kl``/``jsd``.
    """
    if not u > 0:
        raise DomainError(f"phi generator needs u > 0, got {u}")
    phi = 0.5 * u * math.log(u) - 0.5 * (u + 1.0) * math.log(0.5 * (u + 1.0))
    phi_prime = 0.5 * math.log(2.0 * u / (u + 1.0))
    phi_double = 1.0 / (2.0 * u * (u + 1.0))
    return phi, phi_prime, phi_double


def jsd_pairwise(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise JSD between two (m, k) arrays of probability vectors.

    Vectorized helper for property suites and type enumeration; rows must each
    sum to one.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)

    def _h(rows: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(rows > 0, rows * np.log(rows), 0.0)
        return -terms.sum(axis=-1)

    value = _h(m) - 0.5 * (_h(p) + _h(q))
    return np.clip(value, 0.0, LN2)
