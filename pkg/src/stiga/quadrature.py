"""Gauss-Legendre quadrature, per knot span and on the reference interval.

Reference nodes are found by Newton iteration on the Legendre recurrence
instead of shipping hard-coded tables.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["QuadratureRule1D", "gauss_legendre_reference", "per_span_rule"]

_MAX_POINTS = 16


def _legendre(n, x):
    """P_n(x) and P_n'(x) by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(1, n):
        p, p_prev = ((2 * k + 1) * x * p - k * p_prev) / (k + 1), p
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gauss_legendre_reference(n):
    """Gauss-Legendre nodes and weights on [-1, 1].

    Nodes are symmetric about 0 and weights are positive with sum 2.
    """
    if not 1 <= n <= _MAX_POINTS:
        raise ValueError(f"point count must be in [1, {_MAX_POINTS}], got {n}")
    if n == 1:
        return np.zeros(1), np.full(1, 2.0)

    k = np.arange(n)
    x = np.cos(np.pi * (4 * k + 3) / (4 * n + 2))
    for _ in range(100):
        p, dp = _legendre(n, x)
        dx = p / dp
        x -= dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    _, dp = _legendre(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)

    # Symmetrize so paired nodes are exact negatives and weights match.
    order = np.argsort(x)
    x, w = x[order], w[order]
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


@dataclass(frozen=True)
class QuadratureRule1D:
    """Per-span Gauss rule on (0, 1), grouped by nonempty knot span.

    nodes, weights : (num_spans, points_per_span) arrays
    first_active : (num_spans,) first basis-function index active on each span
    """

    nodes: np.ndarray
    weights: np.ndarray
    first_active: np.ndarray

    @property
    def num_spans(self):
        return self.nodes.shape[0]

    @property
    def points_per_span(self):
        return self.nodes.shape[1]

    @property
    def nodes_flat(self):
        return self.nodes.ravel()

    @property
    def weights_flat(self):
        return self.weights.ravel()


def per_span_rule(kv, n):
    """Reference rule mapped affinely into every nonempty span of kv.

    Total weight is the measure of (0, 1); empty spans contribute nothing.
    """
    xi, wi = gauss_legendre_reference(n)
    starts = kv.span_starts
    a = kv.knots[starts]
    b = kv.knots[starts + 1]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * xi[None, :]
    weights = half[:, None] * wi[None, :]
    return QuadratureRule1D(
        nodes=nodes,
        weights=weights,
        first_active=starts - kv.degree,
    )
