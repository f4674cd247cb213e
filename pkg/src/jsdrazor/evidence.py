"""Desk-scale exact oracles: model evidence, razor bounds, ABC acceptance rates.

These operations exist to validate theory numerically, not for production
inference.  They all integrate over the parameter box with tensor
Gauss-Legendre quadrature, using either a uniform prior on the box or the
Fisher-volume (Jeffreys) prior normalized with the same quadrature grid.

Key identities used throughout (type arithmetic for categorical samples):

    P_theta(D)                = exp(-n H(p_hat) - n KL(p_hat, p_theta))
                              = exp(sum_j n_j ln p_j(theta)),
    P_theta(type of D)        = (n! / prod_j n_j!) P_theta(D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Iterator

import numpy as np

from .categorical import Categorical, CountVector, empirical_from_counts, log_type_class_size
from .divergence import jsd_pairwise
from .errors import ConfigError, UnsupportedDimension, UnsupportedScale
from .model import ParametricModel, fisher_info
from .quadrature import tensor_grid

ENUMERATION_CAP = 100_000


@dataclass(frozen=True)
class PriorSpec:
    """Prior over the parameter box plus the quadrature resolution."""

    variant: str = "uniform_on_box"
    nodes_per_dim: int = 64

    def __post_init__(self):
        if self.variant not in ("uniform_on_box", "jeffreys"):
            raise ConfigError(f"unknown prior variant {self.variant!r}")
        if self.nodes_per_dim < 8:
            raise ConfigError(f"need at least 8 quadrature nodes, got {self.nodes_per_dim}")


def _grid_with_prior(m: ParametricModel, prior: PriorSpec):
    """Quadrature points/weights and prior density values on the grid."""
    points, weights = tensor_grid(m.theta_box, prior.nodes_per_dim)
    if prior.variant == "uniform_on_box":
        if m.d == 0:
            density = np.ones(1)
        else:
            volume = float(np.prod(m.theta_box[:, 1] - m.theta_box[:, 0]))
            density = np.full(len(points), 1.0 / volume)
    else:
        root_det = np.array([math.sqrt(max(0.0, float(np.linalg.det(fisher_info(m, th)))))
                             for th in points])
        normalizer = float(np.dot(weights, root_det))
        density = root_det / normalizer
    return points, weights, density


def _grid_probs(m: ParametricModel, points: np.ndarray) -> np.ndarray:
    return np.array([m.probs_array(th) for th in points])


def model_evidence(m: ParametricModel, c: CountVector, prior: PriorSpec = PriorSpec()) -> float:
    """The marginal sequence likelihood ``integral P_theta(D) p(theta) dtheta``."""
    if m.d > 2:
        raise UnsupportedDimension(f"exact evidence supports d <= 2, got d={m.d}")
    points, weights, density = _grid_with_prior(m, prior)
    log_probs = np.log(_grid_probs(m, points))
    seq_loglik = log_probs @ c.counts
    return float(np.dot(weights * density, np.exp(seq_loglik)))


def razor_bound_check(m: ParametricModel, c: CountVector,
                      prior: PriorSpec = PriorSpec()) -> tuple[float, float, float]:
    """The three nested integrals bounding the scaled evidence.

    Returns ``(evidence_scaled, kl_razor, jsd_razor)`` where

        evidence_scaled = integral P_theta(type of D) p dtheta,
        kl_razor        = integral exp(-n KL(p_hat, p_theta)) p dtheta,
        jsd_razor       = integral exp(-2n jsd(p_hat, p_theta)) p dtheta,

    and raises if the chain ``evidence_scaled <= kl_razor <= jsd_razor`` fails
    beyond 1e-12.
    """
    if m.d > 2:
        raise UnsupportedDimension(f"exact evidence supports d <= 2, got d={m.d}")
    n_o = c.total
    p_hat = empirical_from_counts(c)
    points, weights, density = _grid_with_prior(m, prior)
    grid_p = _grid_probs(m, points)
    mass = weights * density

    coef = math.exp(log_type_class_size(c))
    evidence_scaled = coef * float(np.dot(mass, np.exp(np.log(grid_p) @ c.counts)))

    nz = p_hat.probs > 0
    kl_vals = np.dot(p_hat.probs[nz], np.log(p_hat.probs[nz])) - np.log(grid_p[:, nz]) @ p_hat.probs[nz]
    kl_razor = float(np.dot(mass, np.exp(-n_o * np.maximum(kl_vals, 0.0))))

    jsd_vals = jsd_pairwise(np.tile(p_hat.probs, (len(grid_p), 1)), grid_p)
    jsd_razor = float(np.dot(mass, np.exp(-2.0 * n_o * jsd_vals)))

    tol = 1e-12
    if evidence_scaled > kl_razor + tol or kl_razor > jsd_razor + tol:
        raise RuntimeError(
            f"razor bound chain violated: {evidence_scaled} <= {kl_razor} <= {jsd_razor}")
    return evidence_scaled, kl_razor, jsd_razor


def _types(n: int, k: int) -> Iterator[np.ndarray]:
    """All count vectors of n samples over k categories (compositions of n)."""
    for cut in combinations_with_replacement(range(k), n):
        counts = np.zeros(k, dtype=np.int64)
        for ix in cut:
            counts[ix] += 1
        yield counts


@dataclass(frozen=True)
class AcceptanceRateRow:
    epsilon: float
    integral: float
    limit_target: float


@dataclass(frozen=True)
class AcceptanceRateTable:
    rows: list[AcceptanceRateRow]
    evidence: float
    limit_value: float
    pointwise_margin: float

    def to_csv(self) -> str:
        lines = ["epsilon,integral,limit_target"]
        for r in self.rows:
            lines.append(f"{r.epsilon:.17g},{r.integral:.17g},{r.limit_target:.17g}")
        return "\n".join(lines) + "\n"


def acceptance_rate_limit(m: ParametricModel, data: CountVector,
                          prior: PriorSpec = PriorSpec(),
                          epsilon_grid: np.ndarray | None = None) -> AcceptanceRateTable:
    """Exact prior-averaged acceptance rates of root-JSD rejection sampling.

    For each tolerance the integral ``integral P_theta^(n)(A_eps) p(theta)``
    is computed exactly by enumerating sample types (outcomes grouped by their
    empirical distribution, weighted by type-class size).  As the tolerance
    drops below the smallest positive root-JSD gap between types, the value
    reaches ``(n!/prod n_j!) * evidence``; ``pointwise_margin`` reports the
    worst per-theta deviation of the scaled limit from ``P_theta(D)``.
    """
    n, k = data.total, data.k
    if k > 3 or n > 8:
        raise UnsupportedScale(f"acceptance enumeration is desk-scale only (k <= 3, n <= 8); "
                               f"got k={k}, n={n}")
    if k ** n > ENUMERATION_CAP:
        raise UnsupportedScale(f"k^n = {k ** n} exceeds the enumeration cap")
    if m.d > 2:
        raise UnsupportedDimension(f"exact evidence supports d <= 2, got d={m.d}")

    p_hat = empirical_from_counts(data)
    points, weights, density = _grid_with_prior(m, prior)
    log_grid_p = np.log(_grid_probs(m, points))
    mass = weights * density

    type_counts = np.array(list(_types(n, k)))
    type_probs = type_counts / n
    dists = np.sqrt(jsd_pairwise(np.tile(p_hat.probs, (len(type_counts), 1)), type_probs))
    log_sizes = np.array([log_type_class_size(CountVector(tc)) for tc in type_counts])
    # per-type, per-theta sequence probability: exp(sum_j n_j ln p_j(theta))
    seq_prob = np.exp(type_counts @ log_grid_p.T)  # (n_types, n_grid)
    per_type_integral = np.exp(log_sizes) * (seq_prob @ mass)

    evidence = model_evidence(m, data, prior)
    coef = math.exp(log_type_class_size(data))
    limit_value = coef * evidence

    if epsilon_grid is None:
        positive = np.sort(dists[dists > 0])
        eps_low = positive[0] / 2.0 if positive.size else 1e-6
        epsilon_grid = np.geomspace(math.sqrt(math.log(2.0)), eps_low, 12)
    epsilon_grid = np.asarray(epsilon_grid, dtype=np.float64)

    rows = [AcceptanceRateRow(float(eps),
                              float(per_type_integral[dists <= eps].sum()),
                              limit_value)
            for eps in epsilon_grid]

    # Corollary check, pointwise in theta: at tolerance below the smallest gap
    # the acceptance region is exactly the observed type class.
    exact_idx = dists == 0.0
    limit_pointwise = np.exp(log_sizes[exact_idx]) @ seq_prob[exact_idx]
    target_pointwise = coef * np.exp(log_grid_p @ data.counts)
    pointwise_margin = float(np.max(np.abs(limit_pointwise - target_pointwise)
                                    / np.maximum(target_pointwise, 1e-300)))

    return AcceptanceRateTable(rows=rows, evidence=evidence,
                               limit_value=limit_value, pointwise_margin=pointwise_margin)
