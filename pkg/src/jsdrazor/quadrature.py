"""Tensor-product Gauss-Legendre quadrature over a box."""

from __future__ import annotations

import itertools

import numpy as np


def gauss_legendre_1d(a: float, b: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating over [a, b]."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def tensor_grid(box: np.ndarray, nodes_per_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre grid over a (d, 2) box.

    Returns points of shape (nodes_per_dim**d, d) and matching weights.  For
    d = 0 returns a single empty point with weight 1 (the empty product), so
    zero-dimensional "integrals" reduce to evaluating the integrand once.
    """
    box = np.asarray(box, dtype=np.float64).reshape(-1, 2)
    d = box.shape[0]
    if d == 0:
        return np.zeros((1, 0)), np.ones(1)
    axes = [gauss_legendre_1d(lo, hi, nodes_per_dim) for lo, hi in box]
    points = np.array(list(itertools.product(*(ax[0] for ax in axes))))
    weights = np.array([np.prod(ws) for ws in itertools.product(*(ax[1] for ax in axes))])
    return points, weights


def integrate_on_box(fn, box: np.ndarray, nodes_per_dim: int) -> float:
    """Integrate a scalar function of a parameter vector over the box."""
    points, weights = tensor_grid(box, nodes_per_dim)
    values = np.array([fn(theta) for theta in points])
    return float(np.dot(weights, values))
