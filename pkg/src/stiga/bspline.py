"""Univariate B-spline bases on open knot vectors in [0, 1].

Basis values and derivatives are produced by the Cox-de Boor recursion
starting from the degree-zero span indicators.  Every evaluation is local:
only the degree+1 functions supported on the containing knot span are
returned.  The 0/0 convention of the recursion is realized as an explicit
guard on the knot differences, never as an epsilon comparison.
"""

import warnings

import numpy as np

__all__ = [
    "KnotVector",
    "SplineSpace1D",
    "find_span",
    "eval_basis",
    "eval_basis_derivs",
    "greville_points",
    "uniform_open_knots",
]

# Spans narrower than this fraction of the largest span make the
# quasi-uniformity constant effectively degenerate.
_QUASI_UNIFORMITY_FLOOR = 1e-8


class KnotVector:
    """Open knot vector on [0, 1] together with a spline degree.

    Parameters
    ----------
    knots : array_like
        Nondecreasing knot sequence in [0, 1].  The first and last knot
        must each be repeated degree+1 times (open knot vector).
    degree : int
        Polynomial degree, at least 1.

    Attributes
    ----------
    knots : ndarray
        The validated knot sequence.
    degree : int
        Polynomial degree.
    num_basis : int
        Number of basis functions (len(knots) - degree - 1).
    span_starts : ndarray of int
        Knot indices i of the nonempty spans (knots[i], knots[i+1]).
    h : float
        Largest nonempty span width.
    beta : float
        Smallest-to-largest span width ratio, in (0, 1].
    """

    def __init__(self, knots, degree):
        knots = np.ascontiguousarray(knots, dtype=float)
        p = int(degree)
        if p < 1:
            raise ValueError(f"degree must be >= 1, got {degree}")
        if knots.ndim != 1 or knots.size < 2 * (p + 1):
            raise ValueError("knot vector too short for requested degree")
        if np.any(np.diff(knots) < 0.0):
            raise ValueError("knots must be nondecreasing")
        if knots[0] != 0.0 or knots[-1] != 1.0:
            raise ValueError("knot vector must start at 0 and end at 1")
        if np.any(knots[: p + 1] != 0.0) or np.any(knots[-(p + 1):] != 1.0):
            raise ValueError(
                "open knot vector requires the first and last knot repeated degree+1 times"
            )
        self.knots = knots
        self.degree = p
        self.num_basis = knots.size - p - 1

        self.span_starts = np.flatnonzero(np.diff(knots) > 0.0)
        widths = knots[self.span_starts + 1] - knots[self.span_starts]
        self.h = float(widths.max())
        self.beta = float(widths.min() / widths.max())
        if self.beta < _QUASI_UNIFORMITY_FLOOR:
            warnings.warn(
                f"knot spans vary by a factor {1.0 / self.beta:.2e}; "
                "the mesh is effectively not quasi-uniform",
                stacklevel=2,
            )

    @property
    def num_elements(self):
        return self.span_starts.size

    def __repr__(self):
        return f"KnotVector(degree={self.degree}, num_basis={self.num_basis}, h={self.h:g})"


def uniform_open_knots(num_elements, degree):
    """Open knot vector with `num_elements` equal spans on [0, 1].

    All interior knots are simple, so the basis has maximal smoothness.
    """
    if num_elements < 1:
        raise ValueError(f"num_elements must be >= 1, got {num_elements}")
    p = int(degree)
    breaks = np.linspace(0.0, 1.0, num_elements + 1)
    knots = np.concatenate([np.zeros(p), breaks, np.ones(p)])
    return KnotVector(knots, p)


def find_span(kv, t):
    """Index i of the nonempty span with knots[i] <= t < knots[i+1].

    t = 1 is assigned to the last nonempty span (left-limit convention),
    never to an empty terminal span.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"evaluation point {t} outside [0, 1]")
    if t >= 1.0:
        return int(kv.span_starts[-1])
    return int(np.searchsorted(kv.knots, t, side="right")) - 1


def _value_table(kv, t, span):
    """Triangular Cox-de Boor table of basis values at t.

    Returns a (degree+1, degree+2) array T with T[q, i] the value of the
    degree-q function with index span-degree+i.  The trailing column is a
    zero scratch entry for the j+1 term of the recursion.
    """
    knots, p = kv.knots, kv.degree
    tab = np.zeros((p + 1, p + 2))
    tab[0, p] = 1.0
    jlo = span - p
    for q in range(1, p + 1):
        for i in range(p + 1):
            j = jlo + i
            acc = 0.0
            d1 = knots[j + q] - knots[j]
            if d1 > 0.0:
                acc += (t - knots[j]) / d1 * tab[q - 1, i]
            d2 = knots[j + q + 1] - knots[j + 1]
            if d2 > 0.0:
                acc += (knots[j + q + 1] - t) / d2 * tab[q - 1, i + 1]
            tab[q, i] = acc
    return tab


def eval_basis(kv, t, span=None):
    """Values of the degree+1 basis functions that are nonzero at t.

    The returned values belong to functions span-degree .. span and sum
    to one (partition of unity).
    """
    if span is None:
        span = find_span(kv, t)
    return _value_table(kv, t, span)[kv.degree, : kv.degree + 1].copy()


def eval_basis_derivs(kv, t, nderiv, span=None):
    """Values and derivatives of the active basis functions at t.

    Returns an (nderiv+1, degree+1) array whose row j holds the j-th
    derivatives of the functions span-degree .. span.  Rows for orders
    above the degree are exactly zero (the basis is piecewise polynomial
    of degree `degree`).
    """
    if nderiv < 0:
        raise ValueError(f"derivative order must be >= 0, got {nderiv}")
    if span is None:
        span = find_span(kv, t)
    knots, p = kv.knots, kv.degree
    jlo = span - p

    tab = _value_table(kv, t, span)
    out = np.zeros((nderiv + 1, p + 1))
    out[0] = tab[p, : p + 1]

    # Order-m derivatives of the degree-q functions follow from the
    # order-(m-1) derivatives one degree down, with the same 0/0 guard.
    prev = tab
    for m in range(1, min(nderiv, p) + 1):
        cur = np.zeros_like(prev)
        for q in range(m, p + 1):
            for i in range(p + 1):
                j = jlo + i
                acc = 0.0
                d1 = knots[j + q] - knots[j]
                if d1 > 0.0:
                    acc += prev[q - 1, i] / d1
                d2 = knots[j + q + 1] - knots[j + 1]
                if d2 > 0.0:
                    acc -= prev[q - 1, i + 1] / d2
                cur[q, i] = q * acc
        prev = cur
        out[m] = cur[p, : p + 1]
    return out


def greville_points(kv):
    """Knot averages (xi_{j+1} + ... + xi_{j+p}) / p, one per basis function."""
    p = kv.degree
    pts = np.empty(kv.num_basis)
    for j in range(kv.num_basis):
        pts[j] = kv.knots[j + 1 : j + p + 1].sum() / p
    return np.clip(pts, 0.0, 1.0)


_CONSTRAINTS = ("none", "zero_both_ends", "zero_left_end")


class SplineSpace1D:
    """Univariate spline space with boundary constraints by basis selection.

    constraint:
        "none"            -- all basis functions retained
        "zero_both_ends"  -- first and last function removed (functions
                              vanishing at both interval ends remain)
        "zero_left_end"   -- first function removed (functions vanishing
                              at 0 remain)
    """

    def __init__(self, kv, constraint="none"):
        if constraint not in _CONSTRAINTS:
            raise ValueError(f"unknown constraint {constraint!r}")
        l = kv.num_basis
        if constraint == "zero_both_ends":
            first, stop = 1, l - 1
        elif constraint == "zero_left_end":
            first, stop = 1, l
        else:
            first, stop = 0, l
        if stop - first < 1:
            raise ValueError("constraint removes every basis function")
        self.kv = kv
        self.constraint = constraint
        self.first_retained = first
        self.stop_retained = stop
        self.dof_count = stop - first

    @property
    def degree(self):
        return self.kv.degree

    def reduced_index(self, j):
        """Index of unconstrained function j in the retained basis, or -1."""
        if self.first_retained <= j < self.stop_retained:
            return j - self.first_retained
        return -1

    def reduced_indices(self, js):
        """Vectorized `reduced_index` over an integer array."""
        js = np.asarray(js)
        out = js - self.first_retained
        out[(js < self.first_retained) | (js >= self.stop_retained)] = -1
        return out

    def collocation_matrix(self, points, deriv=0):
        """Dense (len(points), dof_count) matrix of derivative-`deriv` values."""
        points = np.asarray(points, dtype=float)
        p = self.kv.degree
        out = np.zeros((points.size, self.dof_count))
        for row, t in enumerate(points):
            span = find_span(self.kv, t)
            vals = eval_basis_derivs(self.kv, t, deriv, span=span)[deriv]
            for a in range(p + 1):
                r = self.reduced_index(span - p + a)
                if r >= 0:
                    out[row, r] = vals[a]
        return out

    def __repr__(self):
        return (
            f"SplineSpace1D(degree={self.kv.degree}, dof={self.dof_count}, "
            f"constraint={self.constraint!r})"
        )
