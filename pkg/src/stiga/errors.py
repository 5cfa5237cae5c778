"""Discrete-solution evaluation, relative error norms, rates, and the
numerical verification of the discrete stability (inf-sup) constant.

The four relative errors of a convergence run are

    E_u1: gradient plus time-derivative seminorm of u - u_h over the cylinder
          (the computable upper bound for the trial-space norm),
    E_u2: plain L2 error of u,
    E_v1: gradient seminorm error of v (normalized by the same norm of v),
    E_v2: plain L2 error of v.

Numerators and denominators share one quadrature so the ratios are
internally consistent; sol = 0 gives exactly 1 for every measure.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import splu
import scipy.sparse as sp

from .assembly import (
    assemble_load,
    assemble_spatial_matrices,
    assemble_time_matrices,
    compose_system,
)
from .geometry import inverse_transpose_grid, pullback_gradient
from .quadrature import per_span_rule

__all__ = [
    "DiscreteSolution",
    "ErrorReport",
    "eval_solution",
    "error_norms",
    "convergence_rates",
    "discrete_infsup_constant",
    "infsup_constant_from_matrices",
    "l2_projection",
]

_INFSUP_DENSE_LIMIT = 400
_ERROR_MEASURES = ("e_u1", "e_u2", "e_v1", "e_v2")


class DiscreteSolution:
    """Coefficient pair (u, v) over a space-time spline space."""

    def __init__(self, u, v, space):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if u.shape != (space.N,) or v.shape != (space.N,):
            raise ValueError("coefficient vectors must have length N")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("coefficient vectors must be finite")
        self.u = u
        self.v = v
        self.space = space


@dataclass
class ErrorReport:
    e_u1: float
    e_u2: float
    e_v1: float
    e_v2: float
    h: float
    p: int
    dof: int


def eval_solution(sol, which, zeta_tau):
    """Value, physical spatial gradient, and time derivative at one point.

    zeta_tau = (zeta_1, zeta_2, tau) in the parametric unit cube.
    """
    space = sol.space
    coeffs = {"u": sol.u, "v": sol.v}[which]
    z1, z2, tau = (float(c) for c in zeta_tau)
    s1, s2, st = space.spatial[0], space.spatial[1], space.temporal

    C = coeffs.reshape(space.n_t, s2.dof_count, s1.dof_count)
    b1 = s1.collocation_matrix([z1], 0)[0]
    d1 = s1.collocation_matrix([z1], 1)[0]
    b2 = s2.collocation_matrix([z2], 0)[0]
    d2 = s2.collocation_matrix([z2], 1)[0]
    bt = st.collocation_matrix([tau], 0)[0]
    dbt = st.collocation_matrix([tau], 1)[0]

    value = np.einsum("tca,t,c,a->", C, bt, b2, b1)
    g1 = np.einsum("tca,t,c,a->", C, bt, b2, d1)
    g2 = np.einsum("tca,t,c,a->", C, bt, d2, b1)
    grad = pullback_gradient(space.geometry, (z1, z2), (g1, g2))
    dt = np.einsum("tca,t,c,a->", C, dbt, b2, b1) / space.final_time
    return float(value), grad, float(dt)


def _error_quadrature(space, quad_points):
    """Quadrature grids, collocation matrices and geometry data for norms."""
    rules, vals, ders = [], [], []
    for s in space.spatial:
        n = s.kv.degree + 2 if quad_points is None else int(quad_points)
        rule = per_span_rule(s.kv, n)
        rules.append(rule)
        vals.append(s.collocation_matrix(rule.nodes_flat, 0))
        ders.append(s.collocation_matrix(rule.nodes_flat, 1))
    st = space.temporal
    n_t = st.kv.degree + 2 if quad_points is None else int(quad_points)
    trule = per_span_rule(st.kv, n_t)
    Bt = st.collocation_matrix(trule.nodes_flat, 0)
    Dt = st.collocation_matrix(trule.nodes_flat, 1)

    z1, z2 = rules[0].nodes_flat, rules[1].nodes_flat
    X, Y = space.geometry.map_grid(z1, z2)
    J, det = space.geometry.jacobian_grid(z1, z2)
    JiT = inverse_transpose_grid(J, det)
    wdet = det * np.outer(rules[0].weights_flat, rules[1].weights_flat)
    wt = space.final_time * trule.weights_flat
    tau = trule.nodes_flat
    return vals, ders, Bt, Dt, X, Y, JiT, wdet, wt, tau


def error_norms(sol, problem, quad_points=None):
    """Relative error measures of a discrete solution against exact fields."""
    space = sol.space
    if problem.geometry_name != space.geometry.name:
        raise ValueError(
            f"problem domain {problem.geometry_name!r} does not match "
            f"space geometry {space.geometry.name!r}"
        )
    (B1, B2), (D1, D2), Bt, Dt, X, Y, JiT, wdet, wt, tau = _error_quadrature(
        space, quad_points
    )
    T = space.final_time
    s1, s2 = space.spatial
    Cu = sol.u.reshape(space.n_t, s2.dof_count, s1.dof_count)
    Cv = sol.v.reshape(space.n_t, s2.dof_count, s1.dof_count)

    # Coefficient slabs contracted with the time basis, one per time node.
    TU = np.tensordot(Bt, Cu, axes=(1, 0))
    TUt = np.tensordot(Dt, Cu, axes=(1, 0)) / T
    TV = np.tensordot(Bt, Cv, axes=(1, 0))

    def grid(Cslab, A1, A2):
        return A1 @ Cslab.T @ A2.T

    num = dict.fromkeys(("u_grad", "u_dt", "u_l2", "v_grad", "v_l2"), 0.0)
    den = dict.fromkeys(("u_grad", "u_dt", "u_l2", "v_grad", "v_l2"), 0.0)
    j00, j01 = JiT[..., 0, 0], JiT[..., 0, 1]
    j10, j11 = JiT[..., 1, 0], JiT[..., 1, 1]

    for k in range(wt.size):
        t = T * tau[k]
        wq = wt[k] * wdet

        uh = grid(TU[k], B1, B2)
        g1 = grid(TU[k], D1, B2)
        g2 = grid(TU[k], B1, D2)
        ugx = j00 * g1 + j01 * g2
        ugy = j10 * g1 + j11 * g2
        ut = grid(TUt[k], B1, B2)

        vh = grid(TV[k], B1, B2)
        g1 = grid(TV[k], D1, B2)
        g2 = grid(TV[k], B1, D2)
        vgx = j00 * g1 + j01 * g2
        vgy = j10 * g1 + j11 * g2

        ue = problem.exact_u(X, Y, t)
        uxe, uye = problem.exact_grad_u(X, Y, t)
        ute = problem.exact_dt_u(X, Y, t)
        ve = problem.exact_v(X, Y, t)
        vxe, vye = problem.exact_grad_v(X, Y, t)

        num["u_grad"] += np.sum(wq * ((ugx - uxe) ** 2 + (ugy - uye) ** 2))
        den["u_grad"] += np.sum(wq * (uxe**2 + uye**2))
        num["u_dt"] += np.sum(wq * (ut - ute) ** 2)
        den["u_dt"] += np.sum(wq * ute**2)
        num["u_l2"] += np.sum(wq * (uh - ue) ** 2)
        den["u_l2"] += np.sum(wq * ue**2)
        num["v_grad"] += np.sum(wq * ((vgx - vxe) ** 2 + (vgy - vye) ** 2))
        den["v_grad"] += np.sum(wq * (vxe**2 + vye**2))
        num["v_l2"] += np.sum(wq * (vh - ve) ** 2)
        den["v_l2"] += np.sum(wq * ve**2)

    for key in ("u_l2", "v_l2", "v_grad"):
        if den[key] < 1e-14:
            raise ValueError(f"degenerate problem: exact norm {key} is numerically zero")
    if den["u_grad"] + den["u_dt"] < 1e-14:
        raise ValueError("degenerate problem: exact trial-space norm is numerically zero")

    return ErrorReport(
        e_u1=float(np.sqrt((num["u_grad"] + num["u_dt"]) / (den["u_grad"] + den["u_dt"]))),
        e_u2=float(np.sqrt(num["u_l2"] / den["u_l2"])),
        e_v1=float(np.sqrt(num["v_grad"] / den["v_grad"])),
        e_v2=float(np.sqrt(num["v_l2"] / den["v_l2"])),
        h=space.h,
        p=space.degree,
        dof=2 * space.N,
    )


def convergence_rates(reports):
    """Observed rates log2(E(h)/E(h/2)) between consecutive reports.

    Returns one dict per consecutive pair (aligned with reports[1:]).
    Pairs whose mesh sizes do not halve, or with a vanishing error, get
    None for the affected measures.
    """
    if len(reports) < 2:
        raise ValueError("need at least two reports to compute rates")
    out = []
    for prev, cur in zip(reports, reports[1:]):
        halving = abs(prev.h / cur.h - 2.0) <= 1e-9
        row = {}
        for name in _ERROR_MEASURES:
            a, b = getattr(prev, name), getattr(cur, name)
            if not halving or a <= 0.0 or b <= 0.0:
                row[name] = None
            else:
                row[name] = float(np.log2(a / b))
        out.append(row)
    return out


def _inv_sqrt(G, label):
    lam, Q = sla.eigh(G)
    if lam[0] <= 1e-12 * lam[-1]:
        raise np.linalg.LinAlgError(f"rank-deficient Gram matrix for the {label} norm")
    return (Q / np.sqrt(lam)) @ Q.T


def infsup_constant_from_matrices(A, G_test, G_trial):
    """Smallest singular value of G_test^{-1/2} A G_trial^{-1/2}."""
    left = _inv_sqrt(np.asarray(G_test, dtype=float), "test")
    right = _inv_sqrt(np.asarray(G_trial, dtype=float), "trial")
    return float(sla.svdvals(left @ np.asarray(A, dtype=float) @ right).min())


def discrete_infsup_constant(space, quad_points=None):
    """Stability constant of the discrete saddle-point form, computed densely.

    The test norm is the gradient seminorm on both components (Gram
    diag(K, K)); the trial norm augments u with the discrete dual seminorm
    realized through w = K^{-1} W u (Gram diag(W^T K^{-1} W + K, K)).
    Guarded to N <= 400 since the computation materializes dense blocks.
    """
    if space.N > _INFSUP_DENSE_LIMIT:
        raise ValueError(
            f"inf-sup verification refused: N={space.N} exceeds the dense "
            f"guard {_INFSUP_DENSE_LIMIT}"
        )
    W_t, M_t = assemble_time_matrices(space.temporal, space.final_time, quad_points)
    K_s, M_s = assemble_spatial_matrices(space.spatial, space.geometry, quad_points)
    Wop, Kop, Mop = compose_system(W_t, M_t, K_s, M_s)
    W = Wop.to_dense()
    K = Kop.to_dense()
    M = Mop.to_dense()

    A = np.block([[W, K + M], [K, -M]])
    K_cho = sla.cho_factor(K)
    S = W.T @ sla.cho_solve(K_cho, W) + K
    S = 0.5 * (S + S.T)

    zero = np.zeros_like(K)
    G_test = np.block([[K, zero], [zero, K]])
    G_trial = np.block([[S, zero], [zero, K]])
    return infsup_constant_from_matrices(A, G_test, G_trial)


def l2_projection(space, fn, quad_points=None):
    """Coefficients of the space-time L2 projection of fn(x, y, t)."""
    n = space.degree + 2 if quad_points is None else int(quad_points)
    _, M_t = assemble_time_matrices(space.temporal, space.final_time, n)
    _, M_s = assemble_spatial_matrices(space.spatial, space.geometry, n)
    load = assemble_load(fn, space, n)
    mt_cho = sla.cho_factor(M_t.toarray())
    X = sla.cho_solve(mt_cho, load.reshape(space.n_t, space.n_s))
    X = splu(sp.csc_matrix(M_s.mat)).solve(X.T).T
    return np.ascontiguousarray(X).ravel()
