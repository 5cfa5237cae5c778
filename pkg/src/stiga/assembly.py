"""Galerkin matrices and load vector of the space-time discrete system.

The unknown pair (u, v) lives in the tensor product of a constrained 2D
spatial spline space and a constrained temporal spline space.  Univariate
time matrices and genuinely two-dimensional spatial matrices are built
element by element in the reduced (constrained) basis; the space-time
operators are their Kronecker compositions and are never materialized.

Coefficient layout: the flat index of a space-time coefficient is
i = i_t * n_s + i_s with i_s = i_2 * n_1 + i_1, i.e. the first spatial
direction runs fastest.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bspline import SplineSpace1D, eval_basis_derivs, uniform_open_knots
from .geometry import inverse_transpose_grid
from .quadrature import per_span_rule

__all__ = [
    "AssemblyError",
    "SparseMatrix",
    "KroneckerOperator",
    "SpaceTimeSpace",
    "assemble_time_matrices",
    "assemble_spatial_matrices",
    "compose_system",
    "assemble_load",
    "assemble_dense_spacetime_oracle",
    "assemble_system",
]

_SINGULAR_JACOBIAN_TOL = 1e-12
_DENSE_ORACLE_LIMIT = 400


class AssemblyError(RuntimeError):
    """Raised when quadrature data is unusable (singular map, bad integrand)."""


class SparseMatrix:
    """CSR matrix with exact structural sparsity and a verified symmetry flag.

    The flag is set only when max|A - A^T| <= 1e-12 * max|A|, so callers can
    rely on it for Cholesky-based checks.
    """

    def __init__(self, mat):
        mat = sp.csr_matrix(mat)
        mat.sum_duplicates()
        mat.eliminate_zeros()
        self.mat = mat
        self.symmetric = False
        if mat.shape[0] == mat.shape[1] and mat.nnz:
            scale = abs(mat).max()
            skew = abs(mat - mat.T)
            self.symmetric = bool(skew.nnz == 0 or skew.max() <= 1e-12 * scale)
        elif mat.shape[0] == mat.shape[1]:
            self.symmetric = True

    @property
    def shape(self):
        return self.mat.shape

    @property
    def nnz(self):
        return self.mat.nnz

    def max_nnz_per_row(self):
        return int(np.diff(self.mat.indptr).max())

    def toarray(self):
        return self.mat.toarray()

    def __matmul__(self, other):
        return self.mat @ other

    @property
    def T(self):
        return SparseMatrix(self.mat.T)

    def write_coordinate_file(self, path):
        """Plain-text (row, col, value) dump, one entry per line."""
        coo = self.mat.tocoo()
        with open(path, "w") as fh:
            fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {v:.17e}\n")

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz}, symmetric={self.symmetric})"


def _raw(mat):
    return mat.mat if isinstance(mat, SparseMatrix) else mat


def _dense(mat):
    mat = _raw(mat)
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat)


class KroneckerOperator:
    """Lazy scale * (A_t kron B_s) acting on vectors of length n_t * n_s.

    Matrix-vector products reshape the vector to an (n_t, n_s) array and
    apply the two factors as ordinary matrix products, so the full operator
    is never formed.
    """

    def __init__(self, time_factor, space_factor, scale=1.0):
        self.left = time_factor
        self.right = space_factor
        self.scale = float(scale)
        lt = _raw(time_factor)
        rt = _raw(space_factor)
        if lt.shape[0] != lt.shape[1] or rt.shape[0] != rt.shape[1]:
            raise ValueError("Kronecker factors must be square")
        self.n_t = lt.shape[0]
        self.n_s = rt.shape[0]

    @property
    def shape(self):
        n = self.n_t * self.n_s
        return (n, n)

    def matvec(self, x):
        x = np.asarray(x)
        if x.size != self.n_t * self.n_s:
            raise ValueError(
                f"operand length {x.size} does not match operator size {self.n_t * self.n_s}"
            )
        X = x.reshape(self.n_t, self.n_s)
        Y = _raw(self.left) @ X
        Z = (_raw(self.right) @ Y.T).T
        return self.scale * np.ascontiguousarray(Z).ravel()

    def transpose(self):
        return KroneckerOperator(
            SparseMatrix(_raw(self.left).T), SparseMatrix(_raw(self.right).T), self.scale
        )

    def to_dense(self):
        n = self.n_t * self.n_s
        if n > 2500:
            raise ValueError(f"refusing to materialize a {n} x {n} Kronecker operator")
        return self.scale * np.kron(_dense(self.left), _dense(self.right))


class SpaceTimeSpace:
    """Constrained tensor-product space for the space-time cylinder.

    spatial : pair of SplineSpace1D with constraint 'zero_both_ends'
    temporal : SplineSpace1D with constraint 'zero_left_end'
    """

    def __init__(self, spatial, temporal, geometry, final_time=1.0):
        spatial = tuple(spatial)
        if len(spatial) != 2:
            raise ValueError("exactly two spatial directions are supported")
        for s in spatial:
            if s.constraint != "zero_both_ends":
                raise ValueError("spatial spaces must use the zero_both_ends constraint")
        if temporal.constraint != "zero_left_end":
            raise ValueError("temporal space must use the zero_left_end constraint")
        if final_time <= 0.0:
            raise ValueError(f"final time must be positive, got {final_time}")
        self.spatial = spatial
        self.temporal = temporal
        self.geometry = geometry
        self.final_time = float(final_time)
        self.n_s = spatial[0].dof_count * spatial[1].dof_count
        self.n_t = temporal.dof_count
        self.N = self.n_s * self.n_t

    @classmethod
    def uniform(cls, geometry, num_elements, degree, final_time=1.0,
                num_elements_t=None, degree_t=None):
        """Equal uniform meshes in both spatial directions and in time."""
        ne_t = num_elements if num_elements_t is None else num_elements_t
        p_t = degree if degree_t is None else degree_t
        spatial = tuple(
            SplineSpace1D(uniform_open_knots(num_elements, degree), "zero_both_ends")
            for _ in range(2)
        )
        temporal = SplineSpace1D(uniform_open_knots(ne_t, p_t), "zero_left_end")
        return cls(spatial, temporal, geometry, final_time)

    @property
    def h(self):
        return max(self.spatial[0].kv.h, self.spatial[1].kv.h, self.temporal.kv.h)

    @property
    def degree(self):
        return self.spatial[0].kv.degree

    def __repr__(self):
        return (
            f"SpaceTimeSpace(geometry={self.geometry.name!r}, n_s={self.n_s}, "
            f"n_t={self.n_t}, N={self.N})"
        )


def _tabulate(kv, rule, nderiv):
    """Basis values/derivatives at every rule node: (spans, nq, nderiv+1, p+1)."""
    p = kv.degree
    out = np.empty((rule.num_spans, rule.points_per_span, nderiv + 1, p + 1))
    spans = rule.first_active + p
    for e in range(rule.num_spans):
        for q in range(rule.points_per_span):
            out[e, q] = eval_basis_derivs(kv, rule.nodes[e, q], nderiv, span=int(spans[e]))
    return out


def assemble_time_matrices(temporal_space, final_time, quad_points=None):
    """Univariate time matrices over (0, final_time).

    Returns (W_t, M_t) where W_t[i, j] integrates b_j' b_i (scale free under
    the affine time map) and M_t[i, j] integrates b_j b_i (scales with the
    final time).
    """
    kv = temporal_space.kv
    n = kv.degree + 1 if quad_points is None else int(quad_points)
    rule = per_span_rule(kv, n)
    tab = _tabulate(kv, rule, 1)
    red = temporal_space.reduced_indices(np.arange(kv.num_basis))

    dof = temporal_space.dof_count
    rows, cols, wvals, mvals = [], [], [], []
    for e in range(rule.num_spans):
        w = rule.weights[e]
        V = tab[e, :, 0, :]
        D = tab[e, :, 1, :]
        wloc = np.einsum("q,qa,qb->ab", w, V, D)
        mloc = final_time * np.einsum("q,qa,qb->ab", w, V, V)
        idx = red[rule.first_active[e] + np.arange(kv.degree + 1)]
        valid = idx >= 0
        iv = idx[valid]
        rows.append(np.repeat(iv, iv.size))
        cols.append(np.tile(iv, iv.size))
        wvals.append(wloc[np.ix_(valid, valid)].ravel())
        mvals.append(mloc[np.ix_(valid, valid)].ravel())

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    W_t = SparseMatrix(sp.coo_matrix((np.concatenate(wvals), (rows, cols)), shape=(dof, dof)))
    M_t = SparseMatrix(sp.coo_matrix((np.concatenate(mvals), (rows, cols)), shape=(dof, dof)))
    return W_t, M_t


def _spatial_quadrature(spaces, geometry, quad_points):
    """Rules, basis tables and geometry data shared by the 2D assemblies."""
    rules, tabs = [], []
    for space in spaces:
        kv = space.kv
        n = kv.degree + 1 if quad_points is None else int(quad_points)
        rule = per_span_rule(kv, n)
        rules.append(rule)
        tabs.append(_tabulate(kv, rule, 1))
    z1 = rules[0].nodes_flat
    z2 = rules[1].nodes_flat
    J, det = geometry.jacobian_grid(z1, z2)
    if np.any(det <= _SINGULAR_JACOBIAN_TOL):
        i, j = np.argwhere(det <= _SINGULAR_JACOBIAN_TOL)[0]
        raise AssemblyError(
            f"singular geometry Jacobian (det={det[i, j]:.3e}) at parametric "
            f"point ({z1[i]:.6f}, {z2[j]:.6f})"
        )
    JiT = inverse_transpose_grid(J, det)
    wdet = det * np.outer(rules[0].weights_flat, rules[1].weights_flat)
    return rules, tabs, JiT, wdet


def assemble_spatial_matrices(spaces, geometry, quad_points=None):
    """Stiffness and mass matrices of the mapped 2D spline space.

    Gradients are pushed forward through the geometry Jacobian, and the
    element loop is genuinely two-dimensional (the map may break the
    spatial tensor structure).  Returns (K_s, M_s).
    """
    spaces = tuple(spaces)
    rules, tabs, JiT, wdet = _spatial_quadrature(spaces, geometry, quad_points)
    r1, r2 = rules
    nq1, nq2 = r1.points_per_span, r2.points_per_span
    red1 = spaces[0].reduced_indices(np.arange(spaces[0].kv.num_basis))
    red2 = spaces[1].reduced_indices(np.arange(spaces[1].kv.num_basis))
    n1 = spaces[0].dof_count
    dof = n1 * spaces[1].dof_count
    loc1 = np.arange(spaces[0].kv.degree + 1)
    loc2 = np.arange(spaces[1].kv.degree + 1)

    rows, cols, kvals, mvals = [], [], [], []
    for e1 in range(r1.num_spans):
        sl1 = slice(e1 * nq1, (e1 + 1) * nq1)
        V1 = tabs[0][e1, :, 0, :]
        D1 = tabs[0][e1, :, 1, :]
        i1 = red1[r1.first_active[e1] + loc1]
        for e2 in range(r2.num_spans):
            sl2 = slice(e2 * nq2, (e2 + 1) * nq2)
            V2 = tabs[1][e2, :, 0, :]
            D2 = tabs[1][e2, :, 1, :]
            wd = wdet[sl1, sl2]
            Jl = JiT[sl1, sl2]

            vals = np.einsum("qa,rc->acqr", V1, V2)
            gx = np.einsum("qa,rc->acqr", D1, V2)
            gy = np.einsum("qa,rc->acqr", V1, D2)
            px = Jl[..., 0, 0] * gx + Jl[..., 0, 1] * gy
            py = Jl[..., 1, 0] * gx + Jl[..., 1, 1] * gy

            kloc = np.einsum("acqr,bdqr,qr->acbd", px, px, wd)
            kloc += np.einsum("acqr,bdqr,qr->acbd", py, py, wd)
            mloc = np.einsum("acqr,bdqr,qr->acbd", vals, vals, wd)

            i2 = red2[r2.first_active[e2] + loc2]
            gidx = i2[None, :] * n1 + i1[:, None]
            valid = (i1[:, None] >= 0) & (i2[None, :] >= 0)
            iv = gidx[valid]
            rows.append(np.repeat(iv, iv.size))
            cols.append(np.tile(iv, iv.size))
            kvals.append(kloc[valid][:, valid].ravel())
            mvals.append(mloc[valid][:, valid].ravel())

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    K_s = SparseMatrix(sp.coo_matrix((np.concatenate(kvals), (rows, cols)), shape=(dof, dof)))
    M_s = SparseMatrix(sp.coo_matrix((np.concatenate(mvals), (rows, cols)), shape=(dof, dof)))
    return K_s, M_s


def compose_system(W_t, M_t, K_s, M_s):
    """Space-time operators W, K, M as lazy Kronecker compositions."""
    if _raw(W_t).shape != _raw(M_t).shape:
        raise ValueError("time factors W_t and M_t must have equal shapes")
    if _raw(K_s).shape != _raw(M_s).shape:
        raise ValueError("space factors K_s and M_s must have equal shapes")
    W = KroneckerOperator(W_t, M_s)
    K = KroneckerOperator(M_t, K_s)
    M = KroneckerOperator(M_t, M_s)
    return W, K, M


def _spatial_load_slab(fvals, rules, tabs, wdet, red1, red2, dims):
    """Reduced spatial load vector for one fixed-time integrand grid."""
    r1, r2 = rules
    n_e1, nq1 = r1.nodes.shape
    n_e2, nq2 = r2.nodes.shape
    F = (fvals * wdet).reshape(n_e1, nq1, n_e2, nq2)
    V1 = tabs[0][:, :, 0, :]
    V2 = tabs[1][:, :, 0, :]
    contrib = np.einsum("xqyr,xqa,yrc->xayc", F, V1, V2, optimize=True)

    l1, l2 = dims
    acc = np.zeros((l1, l2))
    I1 = r1.first_active[:, None] + np.arange(V1.shape[2])[None, :]
    I2 = r2.first_active[:, None] + np.arange(V2.shape[2])[None, :]
    np.add.at(acc, (I1[:, :, None, None], I2[None, None, :, :]), contrib)

    keep1 = red1 >= 0
    keep2 = red2 >= 0
    return acc[np.ix_(keep1, keep2)].T.ravel()


def assemble_load(forcing, space, quad_points=None):
    """Load vector f_i integrating forcing(x, y, t) against every basis function."""
    spaces = space.spatial
    T = space.final_time
    rules, tabs, JiT, wdet = _spatial_quadrature(spaces, space.geometry, quad_points)
    red1 = spaces[0].reduced_indices(np.arange(spaces[0].kv.num_basis))
    red2 = spaces[1].reduced_indices(np.arange(spaces[1].kv.num_basis))
    X, Y = space.geometry.map_grid(rules[0].nodes_flat, rules[1].nodes_flat)
    dims = (spaces[0].kv.num_basis, spaces[1].kv.num_basis)

    kvt = space.temporal.kv
    nt_pts = kvt.degree + 1 if quad_points is None else int(quad_points)
    trule = per_span_rule(kvt, nt_pts)
    ttab = _tabulate(kvt, trule, 0)
    red_t = space.temporal.reduced_indices(np.arange(kvt.num_basis))
    loc_t = np.arange(kvt.degree + 1)

    out = np.zeros((space.n_t, space.n_s))
    for e in range(trule.num_spans):
        idx_t = red_t[trule.first_active[e] + loc_t]
        for q in range(trule.points_per_span):
            tau = trule.nodes[e, q]
            fvals = np.asarray(forcing(X, Y, T * tau), dtype=float)
            if fvals.shape != X.shape:
                fvals = np.broadcast_to(fvals, X.shape)
            if not np.all(np.isfinite(fvals)):
                i, j = np.argwhere(~np.isfinite(fvals))[0]
                raise AssemblyError(
                    f"non-finite forcing value at (x={X[i, j]:.6f}, "
                    f"y={Y[i, j]:.6f}, t={T * tau:.6f})"
                )
            slab = _spatial_load_slab(fvals, rules, tabs, wdet, red1, red2, dims)
            w_time = T * trule.weights[e, q]
            bt = ttab[e, q, 0, :]
            for a in range(bt.size):
                if idx_t[a] >= 0:
                    out[idx_t[a]] += w_time * bt[a] * slab
    return out.ravel()


def assemble_dense_spacetime_oracle(space, forcing=None, quad_points=None):
    """Entry-by-entry dense reference assembly over full space-time loops.

    Deliberately avoids every Kronecker shortcut so it can serve as an
    independent oracle for `compose_system` and `assemble_load`.  Refuses
    to run above the desk-scale guard N <= 400.

    Returns (W, K, M, f) with f = None when no forcing is given.
    """
    if space.N > _DENSE_ORACLE_LIMIT:
        raise ValueError(
            f"dense oracle refused: N={space.N} exceeds the guard {_DENSE_ORACLE_LIMIT}"
        )
    s1, s2 = space.spatial
    T = space.final_time
    geo = space.geometry
    p1, p2, pt = s1.kv.degree, s2.kv.degree, space.temporal.kv.degree

    n1pts = p1 + 1 if quad_points is None else int(quad_points)
    n2pts = p2 + 1 if quad_points is None else int(quad_points)
    ntpts = pt + 1 if quad_points is None else int(quad_points)
    r1 = per_span_rule(s1.kv, n1pts)
    r2 = per_span_rule(s2.kv, n2pts)
    rt = per_span_rule(space.temporal.kv, ntpts)
    tab1 = _tabulate(s1.kv, r1, 1)
    tab2 = _tabulate(s2.kv, r2, 1)
    tabt = _tabulate(space.temporal.kv, rt, 1)
    red1 = s1.reduced_indices(np.arange(s1.kv.num_basis))
    red2 = s2.reduced_indices(np.arange(s2.kv.num_basis))
    redt = space.temporal.reduced_indices(np.arange(space.temporal.kv.num_basis))
    n1 = s1.dof_count

    N = space.N
    W = np.zeros((N, N))
    K = np.zeros((N, N))
    M = np.zeros((N, N))
    f = np.zeros(N) if forcing is not None else None

    for et in range(rt.num_spans):
        it = redt[rt.first_active[et] + np.arange(pt + 1)]
        for qt in range(rt.points_per_span):
            tau = rt.nodes[et, qt]
            wt = T * rt.weights[et, qt]
            bt = tabt[et, qt, 0, :]
            dbt = tabt[et, qt, 1, :] / T
            for e1 in range(r1.num_spans):
                i1 = red1[r1.first_active[e1] + np.arange(p1 + 1)]
                for e2 in range(r2.num_spans):
                    i2 = red2[r2.first_active[e2] + np.arange(p2 + 1)]
                    sidx = i2[:, None] * n1 + i1[None, :]
                    smask = (i2[:, None] >= 0) & (i1[None, :] >= 0)
                    for q1 in range(r1.points_per_span):
                        for q2 in range(r2.points_per_span):
                            z = (r1.nodes[e1, q1], r2.nodes[e2, q2])
                            J, det = geo.jacobian(z)
                            if det <= _SINGULAR_JACOBIAN_TOL:
                                raise AssemblyError(
                                    f"singular geometry Jacobian at parametric point {z}"
                                )
                            w = wt * r1.weights[e1, q1] * r2.weights[e2, q2] * det
                            v1 = tab1[e1, q1, 0, :]
                            d1 = tab1[e1, q1, 1, :]
                            v2 = tab2[e2, q2, 0, :]
                            d2 = tab2[e2, q2, 1, :]
                            sv = np.outer(v2, v1)
                            gpar = np.stack(
                                [np.outer(v2, d1).ravel(), np.outer(d2, v1).ravel()]
                            )
                            gphys = np.linalg.solve(J.T, gpar)

                            # Flatten space-time locals with the global ordering.
                            val3 = (bt[:, None] * sv.ravel()[None, :]).ravel()
                            dt3 = (dbt[:, None] * sv.ravel()[None, :]).ravel()
                            gx3 = (bt[:, None] * gphys[0][None, :]).ravel()
                            gy3 = (bt[:, None] * gphys[1][None, :]).ravel()
                            gind = (it[:, None] * space.n_s + sidx.ravel()[None, :]).ravel()
                            gmask = ((it[:, None] >= 0) & smask.ravel()[None, :]).ravel()

                            gv = gind[gmask]
                            block = np.ix_(gv, gv)
                            W[block] += w * np.outer(val3[gmask], dt3[gmask])
                            K[block] += w * (
                                np.outer(gx3[gmask], gx3[gmask])
                                + np.outer(gy3[gmask], gy3[gmask])
                            )
                            M[block] += w * np.outer(val3[gmask], val3[gmask])
                            if f is not None:
                                x, y = geo.map_point(z)
                                f[gv] += w * float(forcing(x, y, T * tau)) * val3[gmask]
    return W, K, M, f


@dataclass
class AssembledSystem:
    """Univariate factors, Kronecker operators and load of one discrete problem."""

    W_t: SparseMatrix
    M_t: SparseMatrix
    K_s: SparseMatrix
    M_s: SparseMatrix
    W: KroneckerOperator
    K: KroneckerOperator
    M: KroneckerOperator
    load: np.ndarray


def assemble_system(space, forcing, quad_points=None):
    """Assemble every operator and the load vector for one space."""
    W_t, M_t = assemble_time_matrices(space.temporal, space.final_time, quad_points)
    K_s, M_s = assemble_spatial_matrices(space.spatial, space.geometry, quad_points)
    W, K, M = compose_system(W_t, M_t, K_s, M_s)
    load = assemble_load(forcing, space, quad_points)
    return AssembledSystem(W_t, M_t, K_s, M_s, W, K, M, load)
