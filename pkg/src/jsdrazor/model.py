"""Parametric model families on the simplex and their divergence calculus.

A ``ParametricModel`` is a map from a compact parameter box into the simplex
interior, with optional analytic first and second derivatives of the category
probabilities.  On top of that map this module provides the Jacobian, the
Fisher information ``I(theta) = A(theta)^T A(theta)`` with
``A = diag(1/sqrt(p_i)) J``, and the gradient/Hessian of
``theta -> jsd(p_hat, p(theta))`` used by estimators and the Laplace-
approximated scoring rule:

    grad_j = (1/2) sum_i ln(2 p_i(theta) / (p_hat_i + p_i(theta))) dp_i/dtheta_j

    H = sum_i phi'(p_i(theta)/p_hat_i) d2p_i  +  I(theta)/2
        - (1/2) J^T diag(1/(p_hat_i + p_i(theta))) J

At a perfect fit (``p_hat = p(theta)``) the first term vanishes through
``phi'(1) = 0`` and the last equals ``I/4``, so ``H = I/4`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .categorical import Categorical
from .errors import BoundaryError, ConfigError, DimensionError, DomainError, NumericalUnderflow

ProbsFn = Callable[[np.ndarray], np.ndarray]
JacobianFn = Callable[[np.ndarray], np.ndarray]
SecondDerivFn = Callable[[np.ndarray], np.ndarray]
GuessFn = Callable[[np.ndarray], np.ndarray]

UNDERFLOW_FLOOR = 1e-300


@dataclass(frozen=True)
class ParametricModel:
    """A candidate model: dimension ``d``, box ``theta_box``, and probability map.

    ``probs_fn`` must be pure and map every box point into the simplex
    interior.  ``jacobian_fn`` (k x d) and ``second_deriv_fn`` (k x d x d) are
    optional analytic derivatives; finite differences are used when absent.
    ``initial_guess_fn`` may suggest a starting point for estimators from an
    empirical distribution.
    """

    name: str
    d: int
    k: int
    theta_box: np.ndarray
    probs_fn: ProbsFn
    jacobian_fn: Optional[JacobianFn] = None
    second_deriv_fn: Optional[SecondDerivFn] = None
    initial_guess_fn: Optional[GuessFn] = field(default=None, repr=False)

    def __post_init__(self):
        if self.d < 0:
            raise ConfigError(f"dimension must be nonnegative, got {self.d}")
        if self.d >= self.k:
            raise ConfigError(f"need d < k, got d={self.d}, k={self.k}")
        box = np.asarray(self.theta_box, dtype=np.float64).reshape(self.d, 2)
        if self.d and not np.all(box[:, 0] < box[:, 1]):
            raise ConfigError("every box interval needs lower < upper")
        box.flags.writeable = False
        object.__setattr__(self, "theta_box", box)

    def probs_array(self, theta: np.ndarray) -> np.ndarray:
        """Raw probability vector at ``theta`` (no wrapping; hot-loop path)."""
        p = self.probs_fn(np.asarray(theta, dtype=np.float64))
        if p.shape != (self.k,):
            raise DimensionError(f"probs_fn returned shape {p.shape}, expected ({self.k},)")
        return p

    def probs(self, theta: np.ndarray) -> Categorical:
        p = self.probs_array(theta)
        if np.any(p <= 0):
            raise DomainError(f"model {self.name!r} left the simplex interior at theta={theta}")
        return Categorical(p)

    def contains(self, theta: np.ndarray, *, strict: bool = False) -> bool:
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        if self.d == 0:
            return True
        lo, hi = self.theta_box[:, 0], self.theta_box[:, 1]
        if strict:
            return bool(np.all(theta > lo) and np.all(theta < hi))
        return bool(np.all(theta >= lo) and np.all(theta <= hi))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _softmax_family(name, predictors, box, guess_fn=None) -> ParametricModel:
    """Family p_i(theta) = exp(<x_i, theta>) / sum_j exp(<x_j, theta>).

    ``predictors`` is the full k x d matrix.  Analytic derivatives follow from
    the exponential-family identities with mu = E_p[x] and C = Cov_p(x):

        dp_i/dtheta      = p_i (x_i - mu)
        d2p_i/dtheta^2   = p_i ((x_i - mu)(x_i - mu)^T - C)
    """
    x = np.asarray(predictors, dtype=np.float64)
    k, d = x.shape

    def probs_fn(theta: np.ndarray) -> np.ndarray:
        return _softmax(x @ theta)

    def jacobian_fn(theta: np.ndarray) -> np.ndarray:
        p = probs_fn(theta)
        centered = x - p @ x
        return p[:, None] * centered

    def second_deriv_fn(theta: np.ndarray) -> np.ndarray:
        p = probs_fn(theta)
        centered = x - p @ x
        cov = centered.T @ (p[:, None] * centered)
        outer = centered[:, :, None] * centered[:, None, :]
        return p[:, None, None] * (outer - cov[None, :, :])

    if d == 0:
        uniform = np.full(k, 1.0 / k)
        return ParametricModel(name, 0, k, np.zeros((0, 2)), lambda theta: uniform.copy(),
                               lambda theta: np.zeros((k, 0)), lambda theta: np.zeros((k, 0, 0)))
    return ParametricModel(name, d, k, box, probs_fn, jacobian_fn, second_deriv_fn, guess_fn)


def multilogit_model(predictors: np.ndarray, active_dims: int,
                     box: np.ndarray | None = None, name: str | None = None) -> ParametricModel:
    """Multinomial-logit family with a zero-predictor base category.

    ``predictors`` holds the (k-1) x d predictor rows of the non-base
    categories; the last category is the base with the all-zero predictor.
    ``active_dims <= d`` keeps only the leading parameters and fixes the rest
    at zero, which realizes the usual nesting: ``active_dims = 0`` is the
    uniform distribution for any box.
    """
    a = np.asarray(predictors, dtype=np.float64)
    if a.ndim != 2:
        raise ConfigError(f"predictors must be 2-d, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigError("predictors must be finite")
    d_full = a.shape[1]
    if not 0 <= active_dims <= d_full:
        raise ConfigError(f"active_dims={active_dims} outside [0, {d_full}]")
    k = a.shape[0] + 1
    x = np.vstack([a, np.zeros(d_full)])[:, :active_dims]
    if box is None:
        box = np.tile([-3.0, 3.0], (active_dims, 1))

    def guess_fn(p_hat: np.ndarray) -> np.ndarray:
        # Log-odds against the base category, projected on the active predictors.
        if np.any(p_hat <= 0):
            return np.zeros(active_dims)
        logodds = np.log(p_hat / p_hat[-1])
        coef, *_ = np.linalg.lstsq(x, logodds, rcond=None)
        return coef

    if name is None:
        name = f"multilogit_d{active_dims}"
    return _softmax_family(name, x, box, guess_fn if active_dims else None)


_EFFECT_X = np.array([1.0, 1.0, -1.0, -1.0])
_EFFECT_Y = np.array([1.0, -1.0, 1.0, -1.0])
_EFFECT_XY = _EFFECT_X * _EFFECT_Y


def loglinear_model(variant: str, n: int | None = None,
                    box: np.ndarray | None = None) -> ParametricModel:
    """Two-way 2x2 table model with effect coding, as cell probabilities.

    ``two_param`` has main effects only (d = 2); ``saturated`` adds the
    interaction (d = 3).  The intercept that scales expected counts to ``n``
    cancels in the category probabilities, so ``n`` is accepted for interface
    compatibility but does not enter the map.
    """
    if variant == "two_param":
        cols = [_EFFECT_X, _EFFECT_Y]
    elif variant == "saturated":
        cols = [_EFFECT_X, _EFFECT_Y, _EFFECT_XY]
    else:
        raise ConfigError(f"unknown log-linear variant {variant!r}")
    x = np.column_stack(cols)
    d = x.shape[1]
    if box is None:
        box = np.tile([-2.0, 2.0], (d, 1))

    def guess_fn(p_hat: np.ndarray) -> np.ndarray:
        if np.any(p_hat <= 0):
            return np.zeros(d)
        lp = np.log(p_hat)
        # Effect-coded contrasts; exact for the saturated model.
        full = np.array([lp @ _EFFECT_X, lp @ _EFFECT_Y, lp @ _EFFECT_XY]) / 4.0
        return full[:d]

    return _softmax_family(f"loglinear_{variant}", x, box, guess_fn)


def jacobian(m: ParametricModel, theta: np.ndarray) -> np.ndarray:
    """The k x d matrix of probability derivatives at an interior ``theta``.

    Analytic when the model carries one, otherwise central finite differences
    with per-coordinate step ``1e-6 * max(1, |theta_s|)``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if m.d == 0:
        return np.zeros((m.k, 0))
    if not m.contains(theta, strict=True):
        raise DomainError(f"theta={theta} is not strictly inside the box of {m.name!r}")
    if m.jacobian_fn is not None:
        jac = np.asarray(m.jacobian_fn(theta), dtype=np.float64)
        if jac.shape != (m.k, m.d):
            raise DimensionError(f"jacobian_fn returned shape {jac.shape}")
        return jac
    return _fd_jacobian(m, theta)


def _fd_jacobian(m: ParametricModel, theta: np.ndarray) -> np.ndarray:
    jac = np.empty((m.k, m.d))
    for s in range(m.d):
        h = 1e-6 * max(1.0, abs(theta[s]))
        up, dn = theta.copy(), theta.copy()
        up[s] += h
        dn[s] -= h
        jac[:, s] = (m.probs_array(up) - m.probs_array(dn)) / (2.0 * h)
    return jac


def second_derivs(m: ParametricModel, theta: np.ndarray) -> np.ndarray:
    """The k x d x d array of second probability derivatives.

    Analytic when available, otherwise central differences of the Jacobian
    with step ``1e-4 * max(1, |theta_t|)``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if m.d == 0:
        return np.zeros((m.k, 0, 0))
    if m.second_deriv_fn is not None:
        t = np.asarray(m.second_deriv_fn(theta), dtype=np.float64)
        if t.shape != (m.k, m.d, m.d):
            raise DimensionError(f"second_deriv_fn returned shape {t.shape}")
        return t
    jac_at = m.jacobian_fn if m.jacobian_fn is not None else (lambda th: _fd_jacobian(m, th))
    t = np.empty((m.k, m.d, m.d))
    for s in range(m.d):
        h = 1e-4 * max(1.0, abs(theta[s]))
        up, dn = theta.copy(), theta.copy()
        up[s] += h
        dn[s] -= h
        t[:, :, s] = (np.asarray(jac_at(up)) - np.asarray(jac_at(dn))) / (2.0 * h)
    return 0.5 * (t + t.transpose(0, 2, 1))


def fisher_info(m: ParametricModel, theta: np.ndarray) -> np.ndarray:
    """Fisher information ``sum_s dp_s^T dp_s / p_s``; symmetric PSD, d x d.

    The zero-dimensional model returns a 0 x 0 matrix whose determinant is 1
    by the empty-product convention, so it flows through volume formulas.
    """
    if m.d == 0:
        return np.zeros((0, 0))
    p = m.probs_array(np.atleast_1d(theta))
    if np.any(p <= UNDERFLOW_FLOOR):
        raise NumericalUnderflow(f"probability underflow at theta={theta}")
    jac = jacobian(m, theta)
    info = jac.T @ (jac / p[:, None])
    return 0.5 * (info + info.T)


def _interior_pair(p_hat: Categorical, m: ParametricModel, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if p_hat.k != m.k:
        raise DimensionError(f"k mismatch: data {p_hat.k} vs model {m.k}")
    if not p_hat.is_interior():
        raise BoundaryError("empirical distribution has zero cells; the log terms are undefined")
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    p_theta = m.probs_array(theta)
    if np.any(p_theta <= 0):
        raise DomainError(f"model probabilities not interior at theta={theta}")
    return p_hat.probs, p_theta, theta


def jsd_gradient(p_hat: Categorical, m: ParametricModel, theta: np.ndarray) -> np.ndarray:
    """Gradient of ``theta -> jsd(p_hat, p(theta))`` at interior arguments."""
    ph, pt, theta = _interior_pair(p_hat, m, theta)
    if m.d == 0:
        return np.zeros(0)
    w = 0.5 * np.log(2.0 * pt / (ph + pt))
    return w @ jacobian(m, theta)


def jsd_hessian(p_hat: Categorical, m: ParametricModel, theta: np.ndarray) -> np.ndarray:
    """Hessian of ``theta -> jsd(p_hat, p(theta))`` at interior arguments."""
    ph, pt, theta = _interior_pair(p_hat, m, theta)
    if m.d == 0:
        return np.zeros((0, 0))
    jac = jacobian(m, theta)
    w = 0.5 * np.log(2.0 * pt / (ph + pt))
    curvature = np.einsum("i,ist->st", w, second_derivs(m, theta))
    info = jac.T @ (jac / pt[:, None])
    mixed = jac.T @ (jac / (ph + pt)[:, None])
    h = curvature + 0.5 * info - 0.5 * mixed
    return 0.5 * (h + h.T)
