"""Analytic parametrizations of the computational domains.

Both maps take the parametric square (0,1)^2 onto the physical domain with
an everywhere-invertible Jacobian.  The space-time cylinder uses the same
spatial map together with the affine time scaling t = T*tau, so only the
spatial part needs a Jacobian.
"""

import numpy as np

__all__ = [
    "GeometryMap",
    "UnitSquareMap",
    "QuarterAnnulusMap",
    "geometry_by_name",
    "pullback_gradient",
]


class GeometryMap:
    """Common interface of the analytic domain maps."""

    name = "abstract"

    def map_point(self, zeta):
        raise NotImplementedError

    def jacobian(self, zeta):
        """Jacobian matrix and its determinant at a parametric point."""
        raise NotImplementedError

    def map_grid(self, z1, z2):
        """Physical coordinates X, Y on the tensor grid z1 x z2 ('ij' layout)."""
        raise NotImplementedError

    def jacobian_grid(self, z1, z2):
        """Jacobians (n1, n2, 2, 2) and determinants (n1, n2) on a tensor grid."""
        raise NotImplementedError


class UnitSquareMap(GeometryMap):
    """Identity map onto the unit square."""

    name = "square"

    def map_point(self, zeta):
        return np.asarray(zeta, dtype=float).copy()

    def jacobian(self, zeta):
        return np.eye(2), 1.0

    def map_grid(self, z1, z2):
        return np.meshgrid(z1, z2, indexing="ij")

    def jacobian_grid(self, z1, z2):
        n1, n2 = len(z1), len(z2)
        J = np.zeros((n1, n2, 2, 2))
        J[..., 0, 0] = 1.0
        J[..., 1, 1] = 1.0
        return J, np.ones((n1, n2))


class QuarterAnnulusMap(GeometryMap):
    """Polar map onto the quarter annulus in the first quadrant.

    zeta_1 runs radially from r_in to r_out and zeta_2 sweeps the angle
    from 0 to pi/2, so the four boundary edges are the two circular arcs
    and the two coordinate axes.
    """

    name = "ring"

    def __init__(self, r_in=1.0, r_out=2.0):
        if not 0.0 < r_in < r_out:
            raise ValueError(f"need 0 < r_in < r_out, got ({r_in}, {r_out})")
        self.r_in = float(r_in)
        self.r_out = float(r_out)

    def _radius(self, z1):
        return self.r_in + np.asarray(z1) * (self.r_out - self.r_in)

    def map_point(self, zeta):
        r = self._radius(zeta[0])
        th = 0.5 * np.pi * zeta[1]
        return np.array([r * np.cos(th), r * np.sin(th)])

    def jacobian(self, zeta):
        dr = self.r_out - self.r_in
        r = self._radius(zeta[0])
        th = 0.5 * np.pi * zeta[1]
        c, s = np.cos(th), np.sin(th)
        J = np.array([[dr * c, -r * s * 0.5 * np.pi],
                      [dr * s, r * c * 0.5 * np.pi]])
        return J, dr * r * 0.5 * np.pi

    def map_grid(self, z1, z2):
        r = self._radius(np.asarray(z1))[:, None]
        th = 0.5 * np.pi * np.asarray(z2)[None, :]
        return r * np.cos(th), r * np.sin(th)

    def jacobian_grid(self, z1, z2):
        dr = self.r_out - self.r_in
        r = self._radius(np.asarray(z1))[:, None]
        th = 0.5 * np.pi * np.asarray(z2)[None, :]
        c, s = np.cos(th), np.sin(th)
        n1, n2 = len(z1), len(z2)
        J = np.empty((n1, n2, 2, 2))
        J[..., 0, 0] = dr * c
        J[..., 0, 1] = -r * s * 0.5 * np.pi
        J[..., 1, 0] = dr * s
        J[..., 1, 1] = r * c * 0.5 * np.pi
        det = dr * r * 0.5 * np.pi * np.ones_like(c)
        return J, det


def geometry_by_name(name):
    """Geometry registry used by the configuration layer."""
    if name == "square":
        return UnitSquareMap()
    if name == "ring":
        return QuarterAnnulusMap(1.0, 2.0)
    raise ValueError(f"unknown geometry {name!r} (expected 'square' or 'ring')")


def pullback_gradient(geometry, zeta, parametric_grad):
    """Physical gradient J^{-T} g from a parametric gradient g at zeta."""
    J, det = geometry.jacobian(zeta)
    if abs(det) < 1e-12:
        raise ArithmeticError(
            f"singular geometry Jacobian (det={det:.3e}) at parametric point {tuple(zeta)}"
        )
    return np.linalg.solve(J.T, np.asarray(parametric_grad, dtype=float))


def inverse_transpose_grid(J, det):
    """J^{-T} on a grid of 2x2 Jacobians; used to push gradients forward."""
    out = np.empty_like(J)
    out[..., 0, 0] = J[..., 1, 1] / det
    out[..., 0, 1] = -J[..., 1, 0] / det
    out[..., 1, 0] = -J[..., 0, 1] / det
    out[..., 1, 1] = J[..., 0, 0] / det
    return out
