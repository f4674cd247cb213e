"""Minimum-JSD and maximum-likelihood fits over a compact parameter box.

Fits use multi-start Nelder-Mead on the box-clamped objective plus a quadratic
clamp penalty (1e3 times the squared clamp distance), which keeps the search
effectively constrained without a constrained optimizer.  When the empirical
distribution is interior and the model has an analytic Jacobian, an opt-in
L-BFGS-B refinement with the exact JSD gradient sharpens the minimizer.

All randomness (the Latin-hypercube start points) derives from the given seed,
so results are reproducible.  Ties between restarts are broken by smaller
Euclidean norm of the minimizer, then lexicographically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .categorical import Categorical, CountVector, empirical_from_counts
from .divergence import LN2
from .errors import DimensionError
from .model import ParametricModel
from .rng import split_seed

BOX_PENALTY = 1e3
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class OptimizerSettings:
    """Knobs exposed through experiment configs (starts, max_iter, f_tol, x_tol)."""

    starts: int = 8
    max_iter: int = 2000
    f_tol: float = 1e-10
    x_tol: float = 1e-8
    refine_with_gradient: bool = False


DEFAULT_SETTINGS = OptimizerSettings()


@dataclass(frozen=True)
class FitResult:
    """Outcome of a fit: minimizer, attained objective (nats), and diagnostics."""

    theta_hat: np.ndarray
    objective: float
    evaluations: int
    converged: bool
    restarts_used: int

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.theta_hat, dtype=np.float64))
        th.flags.writeable = False
        object.__setattr__(self, "theta_hat", th)


def _entropy_raw(p: np.ndarray) -> float:
    nz = p > 0
    return float(-np.dot(p[nz], np.log(p[nz])))


def _make_jsd_objective(m: ParametricModel, p_hat: np.ndarray):
    half_h_hat = 0.5 * _entropy_raw(p_hat)

    def raw(theta: np.ndarray) -> float:
        pt = m.probs_array(theta)
        mix = 0.5 * (p_hat + pt)
        value = _entropy_raw(mix) - half_h_hat - 0.5 * _entropy_raw(pt)
        return min(max(0.0, value), LN2)

    return raw


def _make_kl_objective(m: ParametricModel, p_hat: np.ndarray):
    nz = p_hat > 0
    ph_nz = p_hat[nz]
    base = float(np.dot(ph_nz, np.log(ph_nz)))

    def raw(theta: np.ndarray) -> float:
        pt = m.probs_array(theta)
        return max(0.0, base - float(np.dot(ph_nz, np.log(pt[nz]))))

    return raw


def _clamp(theta: np.ndarray, box: np.ndarray) -> np.ndarray:
    return np.clip(theta, box[:, 0], box[:, 1])


def _start_points(m: ParametricModel, cfg: OptimizerSettings, seed: int,
                  p_hat: np.ndarray) -> list[np.ndarray]:
    box = m.theta_box
    sampler = qmc.LatinHypercube(d=m.d, seed=split_seed(seed, 0x5747))
    unit = sampler.random(cfg.starts)
    starts = [box[:, 0] + u * (box[:, 1] - box[:, 0]) for u in unit]
    if m.initial_guess_fn is not None:
        guess = np.asarray(m.initial_guess_fn(p_hat), dtype=np.float64)
        if guess.shape == (m.d,) and np.all(np.isfinite(guess)):
            starts.insert(0, _clamp(guess, box))
    return starts


def _multistart(m: ParametricModel, raw, cfg: OptimizerSettings, seed: int,
                p_hat: np.ndarray) -> FitResult:
    box = m.theta_box

    def penalized(theta: np.ndarray) -> float:
        inside = _clamp(theta, box)
        gap = theta - inside
        return raw(inside) + BOX_PENALTY * float(gap @ gap)

    candidates = []
    evaluations = 0
    starts = _start_points(m, cfg, seed, p_hat)
    for x0 in starts:
        res = minimize(penalized, x0, method="Nelder-Mead",
                       options={"fatol": cfg.f_tol, "xatol": cfg.x_tol,
                                "maxiter": cfg.max_iter, "maxfev": 4 * cfg.max_iter})
        evaluations += res.nfev
        theta = _clamp(np.atleast_1d(res.x), box)
        candidates.append((raw(theta), theta, bool(res.success)))

    if cfg.refine_with_gradient and m.jacobian_fn is not None and np.all(p_hat > 0):
        best = min(candidates, key=lambda c: c[0])
        refined = _gradient_refine(m, p_hat, best[1])
        if refined is not None:
            value, theta, nfev = refined
            evaluations += nfev
            if value < best[0]:
                candidates.append((value, theta, True))

    best_obj = min(c[0] for c in candidates)
    ties = [c for c in candidates if c[0] <= best_obj + _TIE_TOL]
    ties.sort(key=lambda c: (float(c[1] @ c[1]), tuple(c[1])))
    obj, theta, ok = ties[0]
    return FitResult(theta_hat=theta, objective=obj, evaluations=evaluations,
                     converged=ok, restarts_used=len(starts))


def _gradient_refine(m: ParametricModel, p_hat: np.ndarray, theta0: np.ndarray):
    half_h_hat = 0.5 * _entropy_raw(p_hat)

    def fun_and_grad(theta):
        pt = m.probs_array(theta)
        mix = 0.5 * (p_hat + pt)
        value = _entropy_raw(mix) - half_h_hat - 0.5 * _entropy_raw(pt)
        grad = (0.5 * np.log(2.0 * pt / (p_hat + pt))) @ m.jacobian_fn(theta)
        return value, grad

    # keep strictly inside so analytic derivatives stay valid
    eps = 1e-12
    bounds = [(lo + eps, hi - eps) for lo, hi in m.theta_box]
    res = minimize(fun_and_grad, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 200, "ftol": 1e-14, "gtol": 1e-10})
    theta = _clamp(np.atleast_1d(res.x), m.theta_box)
    return max(0.0, float(res.fun)), theta, int(res.nfev)


def min_jsd_fit(m: ParametricModel, p_hat: Categorical,
                cfg: OptimizerSettings = DEFAULT_SETTINGS, seed: int = 0) -> FitResult:
    """Minimize ``jsd(p_hat, p(theta))`` over the box; deterministic given seed."""
    if p_hat.k != m.k:
        raise DimensionError(f"k mismatch: data {p_hat.k} vs model {m.k}")
    raw = _make_jsd_objective(m, p_hat.probs)
    if m.d == 0:
        return FitResult(theta_hat=np.zeros(0), objective=raw(np.zeros(0)),
                         evaluations=1, converged=True, restarts_used=0)
    return _multistart(m, raw, cfg, seed, p_hat.probs)


def mle_fit(m: ParametricModel, c: CountVector,
            cfg: OptimizerSettings = DEFAULT_SETTINGS, seed: int = 0) -> FitResult:
    """Maximum likelihood via ``argmin KL(p_hat, p(theta))``.

    The reported objective is the negative log-likelihood of the data,
    ``n_o H(p_hat) + n_o KL(p_hat, p(theta_hat))``.
    """
    p_hat = empirical_from_counts(c)
    if p_hat.k != m.k:
        raise DimensionError(f"k mismatch: data {p_hat.k} vs model {m.k}")
    raw = _make_kl_objective(m, p_hat.probs)
    n_o = c.total
    h_hat = _entropy_raw(p_hat.probs)
    if m.d == 0:
        return FitResult(theta_hat=np.zeros(0), objective=n_o * (h_hat + raw(np.zeros(0))),
                         evaluations=1, converged=True, restarts_used=0)
    fit = _multistart(m, raw, cfg, seed, p_hat.probs)
    return replace(fit, objective=n_o * h_hat + n_o * fit.objective)


def stationarity_gap(m: ParametricModel, p_hat: Categorical, fit: FitResult) -> float:
    """Max-norm of the JSD gradient at the fit, for first-order-condition checks."""
    from .model import jsd_gradient

    grad = jsd_gradient(p_hat, m, fit.theta_hat)
    return float(np.abs(grad).max()) if grad.size else 0.0


__all__ = [
    "OptimizerSettings", "DEFAULT_SETTINGS", "FitResult",
    "min_jsd_fit", "mle_fit", "stationarity_gap",
]
