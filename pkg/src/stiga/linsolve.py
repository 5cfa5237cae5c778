"""Krylov and direct solution of the 2N x 2N saddle-point system.

The block operator is

    [[ W, K + M ],     u     [ f ]
     [ K,    -M ]]  *  v  =  [ 0 ]

applied matrix-free through the Kronecker factorizations of W, K and M.
The default preconditioner eliminates v through the mass matrix and solves
the resulting Schur complement in u exactly, by diagonalizing the small
time pencil (W_t, M_t) and factoring one shifted spatial matrix pair per
time eigenvalue.  A plain Kronecker mass preconditioner and a dense direct
fallback (the acceptance oracle) are also provided.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import _raw

__all__ = [
    "BlockSystem",
    "SolveReport",
    "SolverError",
    "block_matvec",
    "solve",
    "solve_dense",
]

_DENSE_LIMIT = 400


class SolverError(RuntimeError):
    """Raised when the iteration cannot meet the residual contract."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    wall_time: float
    method: str


class BlockSystem:
    """Saddle-point system [[W, K+M], [K, -M]] with right-hand side (f, 0)."""

    def __init__(self, W, K, M, f):
        n = W.shape[0]
        if K.shape[0] != n or M.shape[0] != n:
            raise ValueError("block operators must share one dimension")
        f = np.asarray(f, dtype=float)
        if f.shape != (n,):
            raise ValueError(f"right-hand side length {f.shape} does not match N={n}")
        self.W = W
        self.K = K
        self.M = M
        self.f = f
        self.N = n

    def rhs(self):
        b = np.zeros(2 * self.N)
        b[: self.N] = self.f
        return b

    def matvec(self, z):
        return block_matvec(self, z)

    def to_dense(self):
        W = self.W.to_dense()
        K = self.K.to_dense()
        M = self.M.to_dense()
        return np.block([[W, K + M], [K, -M]])


def block_matvec(system, z):
    """Apply the block operator using only Kronecker matvecs."""
    z = np.asarray(z, dtype=float)
    n = system.N
    if z.shape != (2 * n,):
        raise ValueError(f"vector length {z.shape} does not match 2N={2 * n}")
    u, v = z[:n], z[n:]
    Kv = system.K.matvec(v)
    top = system.W.matvec(u) + Kv + system.M.matvec(v)
    bottom = system.K.matvec(u) - system.M.matvec(v)
    return np.concatenate([top, bottom])


class MassPreconditioner:
    """Block-diagonal inverse of (M, M) via the Kronecker mass factors."""

    name = "mass"

    def __init__(self, system):
        M_t = _dense_factor(system.M.left)
        self._mt_cho = sla.cho_factor(M_t)
        self._ms_lu = splu(sp.csc_matrix(_raw(system.M.right)))
        self._nt = system.M.n_t
        self._ns = system.M.n_s

    def _mass_solve(self, r):
        X = sla.cho_solve(self._mt_cho, r.reshape(self._nt, self._ns))
        return self._ms_lu.solve(X.T).T.ravel()

    def apply(self, r):
        n = self._nt * self._ns
        return np.concatenate([self._mass_solve(r[:n]), self._mass_solve(r[n:])])


class SchurPreconditioner:
    """Exact-in-exact-arithmetic block solver built on the Kronecker structure.

    Eliminating v = M^{-1}(K u - r_2) reduces the block system to

        S u = r_1 + (K + M) M^{-1} r_2,
        S = W_t kron M_s + M_t kron (K_s M_s^{-1} K_s + K_s).

    With the generalized eigendecomposition W_t X = M_t X diag(lam), every
    time mode decouples into (lam M_s + K_s M_s^{-1} K_s + K_s) u_i = g_i,
    which factors as (K_s + a M_s) M_s^{-1} (K_s + b M_s) with a + b = 1 and
    a b = lam.  Each shifted matrix is a sparse complex LU solve.
    """

    name = "schur"

    def __init__(self, system):
        W_t = _dense_factor(system.W.left)
        M_t = _dense_factor(system.K.left)
        self._Ks = sp.csr_matrix(_raw(system.K.right))
        self._Ms = sp.csr_matrix(_raw(system.M.right))
        self._nt = system.K.n_t
        self._ns = system.K.n_s

        lam, X = sla.eig(W_t, M_t)
        self._lam = lam
        self._X = X
        self._Xinv = sla.inv(X)
        self._mt_cho = sla.cho_factor(M_t)
        self._ms_lu = splu(sp.csc_matrix(self._Ms))

        Ks_c = sp.csc_matrix(self._Ks, dtype=complex)
        Ms_c = sp.csc_matrix(self._Ms, dtype=complex)
        disc = np.sqrt(1.0 - 4.0 * lam + 0j)
        self._shift_a = 0.5 * (1.0 + disc)
        self._shift_b = 0.5 * (1.0 - disc)
        self._lu_cache = {}
        for a in np.concatenate([self._shift_a, self._shift_b]):
            key = self._key(a)
            if key in self._lu_cache or self._key(np.conj(a)) in self._lu_cache:
                continue
            self._lu_cache[key] = splu(Ks_c + a * Ms_c)

    @staticmethod
    def _key(a):
        return (round(float(a.real), 14), round(float(a.imag), 14))

    def _shifted_solve(self, a, rhs):
        key = self._key(a)
        lu = self._lu_cache.get(key)
        if lu is not None:
            return lu.solve(rhs)
        lu = self._lu_cache[self._key(np.conj(a))]
        return np.conj(lu.solve(np.conj(rhs)))

    def _schur_solve(self, g):
        G = sla.cho_solve(self._mt_cho, g.reshape(self._nt, self._ns))
        G = self._Xinv @ G
        U = np.empty_like(G, dtype=complex)
        for i in range(self._nt):
            y = self._shifted_solve(self._shift_a[i], G[i])
            y = self._Ms @ y
            U[i] = self._shifted_solve(self._shift_b[i], y)
        return (self._X @ U).real

    def apply(self, r):
        n = self._nt * self._ns
        R1 = r[:n].reshape(self._nt, self._ns)
        R2 = r[n:].reshape(self._nt, self._ns)

        # g = r1 + (K + M) M^{-1} r2, which is row-wise (K_s + M_s) M_s^{-1}.
        tmp = self._ms_lu.solve(R2.T)
        G = R1 + ((self._Ks + self._Ms) @ tmp).T
        U = self._schur_solve(G.ravel())

        # v = M^{-1} (K u - r2) = (I kron M_s^{-1} K_s) u - (M_t^{-1} kron M_s^{-1}) r2.
        V = self._ms_lu.solve((self._Ks @ U.T)).T
        V -= self._ms_lu.solve(sla.cho_solve(self._mt_cho, R2).T).T
        return np.concatenate([U.ravel(), V.ravel()])


def _dense_factor(mat):
    mat = _raw(mat)
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=float)


_PRECONDITIONERS = {"schur": SchurPreconditioner, "mass": MassPreconditioner}


def _gmres(apply_op, b, apply_prec, tol, restart, max_iter, x0):
    """Right-preconditioned restarted GMRES.

    Right preconditioning keeps the Arnoldi residual equal to the true
    residual of the returned iterate, so the convergence test needs no
    preconditioner-dependent correction.
    """
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    total = 0
    best_rel = np.inf

    while True:
        r = b - apply_op(x)
        beta = np.linalg.norm(r)
        rel = beta / bnorm
        best_rel = min(best_rel, rel)
        if rel <= tol:
            return x, total, rel, True
        if total >= max_iter:
            return x, total, rel, False

        m = min(restart, max_iter - total)
        V = [r / beta]
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta

        k_used = 0
        breakdown = False
        for k in range(m):
            w = apply_op(apply_prec(V[k]))
            for i in range(k + 1):
                H[i, k] = V[i] @ w
                w -= H[i, k] * V[i]
            H[k + 1, k] = np.linalg.norm(w)
            if H[k + 1, k] > 1e-300:
                V.append(w / H[k + 1, k])
            else:
                breakdown = True

            for i in range(k):
                tmp = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = tmp
            denom = np.hypot(H[k, k], H[k + 1, k])
            if denom == 0.0:
                raise SolverError("GMRES breakdown: stagnant Krylov direction")
            cs[k] = H[k, k] / denom
            sn[k] = H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]

            k_used = k + 1
            total += 1
            if abs(g[k_used]) / bnorm <= tol or breakdown:
                break

        y = sla.solve_triangular(H[:k_used, :k_used], g[:k_used])
        dx = np.zeros_like(b)
        for i in range(k_used):
            dx += y[i] * V[i]
        x = x + apply_prec(dx)


def solve(system, tol=1e-10, max_iter=None, restart=100, preconditioner="schur",
          x0=None, method="gmres"):
    """Solve the block system to a verified relative residual.

    Returns (u, v, report).  The reported residual is recomputed with one
    independent block matvec after the iteration; failure to meet `tol`
    raises SolverError carrying the best residual seen.
    """
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if not np.all(np.isfinite(system.f)):
        raise ValueError("right-hand side contains non-finite entries")

    start = time.perf_counter()
    n = system.N
    b = system.rhs()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        report = SolveReport(0, 0.0, time.perf_counter() - start, "trivial")
        return np.zeros(n), np.zeros(n), report

    if method == "dense":
        z = _dense_solve_vector(system)
        label = "dense"
        iters = 0
    elif method == "gmres":
        if max_iter is None:
            max_iter = 10 * (2 * n)
        try:
            prec = _PRECONDITIONERS[preconditioner](system)
        except KeyError:
            raise ValueError(f"unknown preconditioner {preconditioner!r}") from None
        z, iters, _, converged = _gmres(
            system.matvec, b, prec.apply, tol, restart, max_iter, x0
        )
        label = f"gmres+{prec.name}"
        if not converged:
            rel = np.linalg.norm(b - system.matvec(z)) / bnorm
            raise SolverError(
                f"GMRES did not reach tol={tol:.1e} within {max_iter} iterations "
                f"(best relative residual {rel:.3e})",
                residual=rel,
            )
    else:
        raise ValueError(f"unknown method {method!r}")

    rel = np.linalg.norm(b - system.matvec(z)) / bnorm
    if rel > tol and method != "dense":
        raise SolverError(
            f"verified relative residual {rel:.3e} exceeds tol={tol:.1e}", residual=rel
        )
    report = SolveReport(iters, float(rel), time.perf_counter() - start, label)
    return z[:n].copy(), z[n:].copy(), report


def _dense_solve_vector(system):
    if system.N > _DENSE_LIMIT:
        raise ValueError(
            f"dense fallback refused: N={system.N} exceeds the guard {_DENSE_LIMIT}"
        )
    A = system.to_dense()
    cond_check = np.linalg.cond(A)
    if not np.isfinite(cond_check) or cond_check > 1e15:
        raise SolverError(f"block matrix numerically singular (cond={cond_check:.2e})")
    return np.linalg.solve(A, system.rhs())


def solve_dense(system):
    """Dense direct oracle for desk-scale systems (N <= 400)."""
    start = time.perf_counter()
    n = system.N
    b = system.rhs()
    bnorm = np.linalg.norm(b)
    z = _dense_solve_vector(system)
    rel = 0.0 if bnorm == 0.0 else np.linalg.norm(b - system.matvec(z)) / bnorm
    report = SolveReport(0, float(rel), time.perf_counter() - start, "dense")
    return z[:n].copy(), z[n:].copy(), report
