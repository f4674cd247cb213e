"""Model scoring rules and the selection step.

The primary rule scores a fitted model by

    sic_jsd = 2 n_o jsd(p_hat, p(theta_hat)) + d ln sqrt(n_o / (8 pi)),

valid for n_o > 8 pi, and the classical likelihood-based counterpart is

    sic = -ln P_theta_ml(D) + (d / 2) ln n_o.

Two opt-in variants keep the geometric-complexity terms that the coarse rule
drops: ``refined_penalty`` adds the model-volume integral under the I/4
Hessian substitution, and ``razor_laplace`` evaluates the full Laplace
approximation with the exact JSD Hessian at the fit.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .categorical import CountVector, empirical_from_counts
from .errors import ConfigError, HessianNotPD, QuadratureWarning, SampleTooSmall, UnsupportedDimension
from .estimate import FitResult
from .model import ParametricModel, fisher_info, jsd_hessian
from .quadrature import tensor_grid

EIGHT_PI = 8.0 * math.pi
_TIE_TOL = 1e-12

CRITERIA = ("sic_jsd", "sic", "refined", "sic_bolfi")


def dimension_penalty(d: int, n_o: int) -> float:
    """The coarse complexity penalty ``d ln sqrt(n_o / (8 pi))``."""
    if n_o <= EIGHT_PI:
        raise SampleTooSmall(f"need n_o > 8*pi (~25.13), got {n_o}")
    return d * math.log(math.sqrt(n_o / EIGHT_PI))


def sic_jsd(m: ParametricModel, c: CountVector, fit: FitResult) -> float:
    """Coarse JSD score: twice the sample-scaled fit plus the dimension penalty."""
    return 2.0 * c.total * fit.objective + dimension_penalty(m.d, c.total)


def sic(m: ParametricModel, c: CountVector, mle: FitResult) -> float:
    """Schwarz criterion; ``mle.objective`` is the negative log-likelihood."""
    if c.total < 2:
        raise SampleTooSmall(f"need n_o >= 2, got {c.total}")
    return mle.objective + 0.5 * m.d * math.log(c.total)


def model_volume(m: ParametricModel, nodes_per_dim: int = 64) -> float:
    """The volume integral of ``sqrt(det I(theta))`` over the box.

    Zero-dimensional models have volume 1 by the empty-product convention.
    Limited to d <= 3 (tensor quadrature cost grows exponentially).
    """
    if m.d == 0:
        return 1.0
    if m.d > 3:
        raise UnsupportedDimension(f"volume quadrature supports d <= 3, got d={m.d}")
    points, weights = tensor_grid(m.theta_box, nodes_per_dim)
    values = np.array([math.sqrt(max(0.0, float(np.linalg.det(fisher_info(m, theta)))))
                       for theta in points])
    return float(np.dot(weights, values))


def refined_penalty(m: ParametricModel, c: CountVector, fit: FitResult,
                    nodes_per_dim: int = 64) -> float:
    """The penalty with the model-volume term kept, under the H = I/4 substitution:

        (d/2) ln(n_o / 2 pi) + ln V(Theta) - d ln 2
      = d ln sqrt(n_o / (8 pi)) + ln V(Theta).

    A halved-resolution quadrature cross-check warns (``QuadratureWarning``)
    when the volume integral has not converged to 1e-4 relative.
    """
    if m.d == 0:
        return 0.0
    volume = model_volume(m, nodes_per_dim)
    coarse_check = model_volume(m, max(8, nodes_per_dim // 2))
    if abs(volume - coarse_check) > 1e-4 * max(1.0, abs(volume)):
        warnings.warn(f"volume quadrature not converged for {m.name!r}: "
                      f"{volume} vs {coarse_check}", QuadratureWarning)
    return dimension_penalty(m.d, c.total) + math.log(volume)


def razor_laplace(m: ParametricModel, c: CountVector, fit: FitResult,
                  nodes_per_dim: int = 64) -> float:
    """Full Laplace-approximated negative log of the divergence-weighted razor:

        2 n_o jsd + (d/2) ln(n_o / 2 pi) + ln V(Theta)
        + (1/2) ln(det H / det I(theta_hat)),

    with the exact Hessian ``H`` of the JSD at the fit (not the I/4 limit).
    """
    n_o = c.total
    if m.d == 0:
        return 2.0 * n_o * fit.objective
    p_hat = empirical_from_counts(c)
    h = jsd_hessian(p_hat, m, fit.theta_hat)
    try:
        np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        raise HessianNotPD(f"JSD Hessian of {m.name!r} at the fit is not positive definite")
    sign_h, logdet_h = np.linalg.slogdet(h)
    sign_i, logdet_i = np.linalg.slogdet(fisher_info(m, fit.theta_hat))
    if sign_i <= 0:
        raise HessianNotPD(f"Fisher information of {m.name!r} is singular at the fit")
    volume = model_volume(m, nodes_per_dim)
    return (2.0 * n_o * fit.objective
            + 0.5 * m.d * math.log(n_o / (2.0 * math.pi))
            + math.log(volume)
            + 0.5 * (logdet_h - logdet_i))


@dataclass(frozen=True)
class ModelScore:
    """Per-model criterion values produced while scoring one data set."""

    name: str
    d: int
    fit: FitResult
    sic_jsd: Optional[float] = None
    sic: Optional[float] = None
    refined: Optional[float] = None
    sic_bolfi: Optional[float] = None

    def value(self, criterion: str) -> float:
        v = getattr(self, criterion)
        if v is None:
            raise ConfigError(f"model {self.name!r} carries no {criterion!r} value")
        return v


@dataclass(frozen=True)
class ScoreReport:
    """Criterion values for all candidates and the selected model index."""

    model_names: list[str]
    sic_jsd: Optional[list[float]]
    sic: Optional[list[float]]
    refined: Optional[list[float]]
    sic_bolfi: Optional[list[float]]
    fits: list[FitResult]
    selected_index: int
    n_o: int
    criterion: str

    def to_json(self) -> str:
        def fit_dict(f: FitResult) -> dict:
            return {"theta_hat": [float(x) for x in f.theta_hat],
                    "objective": f.objective, "evaluations": f.evaluations,
                    "converged": f.converged, "restarts_used": f.restarts_used}

        payload = {
            "model_names": self.model_names,
            "sic_jsd": self.sic_jsd,
            "sic": self.sic,
            "refined": self.refined,
            "sic_bolfi": self.sic_bolfi,
            "fits": [fit_dict(f) for f in self.fits],
            "selected_index": self.selected_index,
            "n_o": self.n_o,
            "criterion": self.criterion,
        }
        return json.dumps(payload, indent=2)


def select(scores: Sequence[ModelScore], n_o: int, criterion: str = "sic_jsd") -> ScoreReport:
    """Pick the candidate minimizing ``criterion``.

    Ties within 1e-12 go to the smaller dimension, then the smaller index
    (the parsimony tie-break).
    """
    if len(scores) < 2:
        raise ConfigError(f"need at least 2 candidate models, got {len(scores)}")
    if criterion not in CRITERIA:
        raise ConfigError(f"unknown criterion {criterion!r}; choose from {CRITERIA}")
    values = [s.value(criterion) for s in scores]
    best = min(values)
    tied = [i for i, v in enumerate(values) if v <= best + _TIE_TOL]
    selected = min(tied, key=lambda i: (scores[i].d, i))

    def column(attr: str) -> Optional[list[float]]:
        vals = [getattr(s, attr) for s in scores]
        return None if all(v is None for v in vals) else [v for v in vals]

    return ScoreReport(
        model_names=[s.name for s in scores],
        sic_jsd=column("sic_jsd"),
        sic=column("sic"),
        refined=column("refined"),
        sic_bolfi=column("sic_bolfi"),
        fits=[s.fit for s in scores],
        selected_index=selected,
        n_o=n_o,
        criterion=criterion,
    )
