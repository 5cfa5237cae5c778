"""Manufactured solutions: exact fields, forcing terms, and an FD residual oracle.

Each problem fixes an exact u with homogeneous initial and boundary data,
the auxiliary field v = -lap(u), and the forcing f = dt(u) + bilap(u) - lap(u).
The ring problem's polynomial derivatives were derived once with a computer
algebra system and are embedded in a factored form; the finite-difference
residual oracle below is the guard that the embedded expressions solve the
equation they claim to.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "ManufacturedProblem",
    "example1",
    "example2",
    "by_name",
    "pde_residual_oracle",
    "interior_samples",
    "boundary_samples",
]


@dataclass(frozen=True)
class ManufacturedProblem:
    """Exact solution pair and forcing over one named domain.

    All callables are vectorized over numpy arrays of coordinates and
    accept physical (x, y, t).
    """

    name: str
    geometry_name: str
    final_time: float
    exact_u: Callable
    exact_grad_u: Callable
    exact_dt_u: Callable
    exact_v: Callable
    exact_grad_v: Callable
    forcing: Callable


def example1():
    """Separable sine solution on the unit square."""
    pi = np.pi

    def u(x, y, t):
        return np.sin(pi * t) * np.sin(pi * x) * np.sin(pi * y)

    def grad_u(x, y, t):
        st = np.sin(pi * t)
        return (pi * st * np.cos(pi * x) * np.sin(pi * y),
                pi * st * np.sin(pi * x) * np.cos(pi * y))

    def dt_u(x, y, t):
        return pi * np.cos(pi * t) * np.sin(pi * x) * np.sin(pi * y)

    def v(x, y, t):
        # -lap(u) for the product of sines
        return 2.0 * pi**2 * u(x, y, t)

    def grad_v(x, y, t):
        gx, gy = grad_u(x, y, t)
        return (2.0 * pi**2 * gx, 2.0 * pi**2 * gy)

    def forcing(x, y, t):
        space = np.sin(pi * x) * np.sin(pi * y)
        return (pi * np.cos(pi * t) + (4.0 * pi**4 + 2.0 * pi**2) * np.sin(pi * t)) * space

    return ManufacturedProblem(
        name="example1",
        geometry_name="square",
        final_time=1.0,
        exact_u=u,
        exact_grad_u=grad_u,
        exact_dt_u=dt_u,
        exact_v=v,
        exact_grad_v=grad_v,
        forcing=forcing,
    )


def _ring_pieces(x, y):
    """Shared factors of the ring polynomial u = t * x^3 y^3 ((s-1)(s-4))^3.

    With s = x^2 + y^2, w = (s-1)(s-4) and phi(s) = w^3, the chain rule
    reduces every derivative to small polynomials in x, y, s, w and
    w' = 2s - 5.  Keeping w as an explicit factor preserves the exact
    zeros on the circular boundary under floating-point evaluation.
    """
    s = x * x + y * y
    w = (s - 1.0) * (s - 4.0)
    wp = 2.0 * s - 5.0
    m = x**3 * y**3
    phi0 = w**3
    phi1 = 3.0 * w * w * wp
    phi2 = 6.0 * w * (wp * wp + w)
    phi3 = 6.0 * wp**3 + 36.0 * w * wp
    phi4 = 72.0 * wp * wp + 72.0 * w
    return s, w, wp, m, phi0, phi1, phi2, phi3, phi4


def _ring_g(x, y):
    _, _, _, m, phi0, _, _, _, _ = _ring_pieces(x, y)
    return m * phi0


def _ring_grad_g(x, y):
    _, _, _, m, phi0, phi1, _, _, _ = _ring_pieces(x, y)
    gx = 3.0 * x * x * y**3 * phi0 + 2.0 * x * m * phi1
    gy = 3.0 * x**3 * y * y * phi0 + 2.0 * y * m * phi1
    return gx, gy


def _ring_lap_g(x, y):
    s, _, _, m, phi0, phi1, phi2, _, _ = _ring_pieces(x, y)
    return 6.0 * x * y * s * phi0 + 28.0 * m * phi1 + 4.0 * s * m * phi2


def _ring_grad_lap_g(x, y):
    s, _, _, m, phi0, phi1, phi2, phi3, _ = _ring_pieces(x, y)
    gx = ((18.0 * x * x * y + 6.0 * y**3) * phi0
          + (12.0 * x * x * y * s + 84.0 * x * x * y**3) * phi1
          + (64.0 * x * m + 12.0 * s * x * x * y**3) * phi2
          + 8.0 * x * s * m * phi3)
    gy = ((18.0 * y * y * x + 6.0 * x**3) * phi0
          + (12.0 * y * y * x * s + 84.0 * x**3 * y * y) * phi1
          + (64.0 * y * m + 12.0 * s * y * y * x**3) * phi2
          + 8.0 * y * s * m * phi3)
    return gx, gy


def _ring_bilap_g(x, y):
    s, _, _, m, phi0, phi1, phi2, phi3, phi4 = _ring_pieces(x, y)
    return (72.0 * x * y * phi0
            + 288.0 * x * y * s * phi1
            + (48.0 * x * y * s * s + 896.0 * m) * phi2
            + 256.0 * s * m * phi3
            + 16.0 * s * s * m * phi4)


def example2():
    """Polynomial solution on the quarter annulus, linear in time.

    The factor x^3 y^3 ((x^2+y^2-1)(x^2+y^2-4))^3 has triple zeros on all
    four boundary pieces, so both u and v = -lap(u) vanish there.
    """

    def u(x, y, t):
        return t * _ring_g(x, y)

    def grad_u(x, y, t):
        gx, gy = _ring_grad_g(x, y)
        return (t * gx, t * gy)

    def dt_u(x, y, t):
        return _ring_g(x, y) + 0.0 * t

    def v(x, y, t):
        return -t * _ring_lap_g(x, y)

    def grad_v(x, y, t):
        gx, gy = _ring_grad_lap_g(x, y)
        return (-t * gx, -t * gy)

    def forcing(x, y, t):
        return _ring_g(x, y) + t * (_ring_bilap_g(x, y) - _ring_lap_g(x, y))

    return ManufacturedProblem(
        name="example2",
        geometry_name="ring",
        final_time=1.0,
        exact_u=u,
        exact_grad_u=grad_u,
        exact_dt_u=dt_u,
        exact_v=v,
        exact_grad_v=grad_v,
        forcing=forcing,
    )


_REGISTRY = {"example1": example1, "example2": example2}


def by_name(name):
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(
            f"unknown problem {name!r} (expected one of {sorted(_REGISTRY)})"
        ) from None


def _boundary_distance(problem, x, y):
    if problem.geometry_name == "square":
        return np.minimum.reduce([x, 1.0 - x, y, 1.0 - y])
    r = np.hypot(x, y)
    return np.minimum.reduce([x, y, r - 1.0, 2.0 - r])


def interior_samples(problem, n, rng, margin=0.1):
    """Random physical sample points at least `margin` inside the domain."""
    pts = []
    while len(pts) < n:
        t = rng.uniform(0.1 * problem.final_time, problem.final_time)
        if problem.geometry_name == "square":
            x, y = rng.uniform(margin, 1.0 - margin, size=2)
        else:
            r = rng.uniform(1.0 + margin, 2.0 - margin)
            th = rng.uniform(margin, 0.5 * np.pi - margin)
            x, y = r * np.cos(th), r * np.sin(th)
        if _boundary_distance(problem, x, y) >= margin:
            pts.append((x, y, t))
    return np.array(pts)


def boundary_samples(problem, n, rng):
    """Random physical points on the spatial boundary, at random times."""
    pts = np.empty((n, 3))
    pts[:, 2] = rng.uniform(0.0, problem.final_time, size=n)
    for i in range(n):
        side = rng.integers(4)
        a = rng.uniform(0.0, 1.0)
        if problem.geometry_name == "square":
            x, y = [(a, 0.0), (a, 1.0), (0.0, a), (1.0, a)][side]
        else:
            th = 0.5 * np.pi * a
            r = 1.0 + a
            x, y = [
                (np.cos(th), np.sin(th)),
                (2.0 * np.cos(th), 2.0 * np.sin(th)),
                (r, 0.0),
                (0.0, r),
            ][side]
        pts[i, :2] = (x, y)
    return pts


def _fd_laplacian(fn, x, y, t, h):
    return (fn(x + h, y, t) + fn(x - h, y, t) + fn(x, y + h, t) + fn(x, y - h, t)
            - 4.0 * fn(x, y, t)) / (h * h)


def _fd_laplacian_rich(fn, x, y, t, h):
    return (4.0 * _fd_laplacian(fn, x, y, t, 0.5 * h) - _fd_laplacian(fn, x, y, t, h)) / 3.0


def _fd_bilaplacian_rich(fn, x, y, t, h):
    # Nested 5-point Laplacians with two Richardson levels.  The second
    # level is needed on the ring, whose eighth derivatives are large
    # enough to leave a single-level truncation error near the criterion.
    def lap_of_lap(step):
        def inner(ax, ay, at):
            return _fd_laplacian(fn, ax, ay, at, step)

        return _fd_laplacian(inner, x, y, t, step)

    b1 = lap_of_lap(h)
    b2 = lap_of_lap(0.5 * h)
    b4 = lap_of_lap(0.25 * h)
    r1 = (4.0 * b2 - b1) / 3.0
    r2 = (4.0 * b4 - b2) / 3.0
    return (16.0 * r2 - r1) / 15.0


def pde_residual_oracle(problem, points, step=1.6e-2, dt_step=1e-6):
    """Max relative defect of dt(u) + bilap(u) - lap(u) against the forcing.

    Everything is differenced from exact_u alone (nested 5-point Laplacians
    with Richardson extrapolation), so an error anywhere in the embedded
    derivative expressions shows up as a nonzero residual.  The default
    step balances bilaplacian roundoff (divides by step^4) against the
    truncation of the degree-18 ring polynomial.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must be an (n, 3) array of (x, y, t)")
    x, y, t = pts[:, 0], pts[:, 1], pts[:, 2]
    dist = _boundary_distance(problem, x, y)
    if np.any(dist < 5.0 * step):
        bad = np.argmin(dist)
        raise ValueError(
            f"sample ({x[bad]:.4f}, {y[bad]:.4f}) is closer to the boundary "
            f"than 5 finite-difference steps ({5 * step:.2e})"
        )
    u = problem.exact_u
    dt_term = (u(x, y, t + dt_step) - u(x, y, t - dt_step)) / (2.0 * dt_step)
    lap_term = _fd_laplacian_rich(u, x, y, t, 0.25 * step)
    bilap_term = _fd_bilaplacian_rich(u, x, y, t, step)
    fvals = problem.forcing(x, y, t)
    resid = np.abs(dt_term + bilap_term - lap_term - fvals) / (1.0 + np.abs(fvals))
    return float(resid.max())
