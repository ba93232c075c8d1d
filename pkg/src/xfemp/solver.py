"""Direct and iterative linear solves plus the Newton driver operating in
the transformed DOF space.

GMRES is right-preconditioned so the iteration's residual estimate tracks
the true residual of the system actually being solved; convergence is
re-verified against the explicitly computed residual before it is reported.
The stopping tolerance is absolute, matching the experiment drivers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .assembly import LinearSystem, jacobian, residual
from .precond import (GeometricPreconditioner, identity_preconditioner,
                      transform_initial_guess, transform_system,
                      untransform_solution)

_DENSE_TRIANGULAR_LIMIT = 4096


class SingularMatrixError(RuntimeError):
    """Factorization failed or produced unusable pivots."""


@dataclass(frozen=True)
class SolverConfig:
    method: str = "direct"            # "direct" | "gmres"
    gmres_tol: float = 1e-6           # absolute residual threshold
    gmres_max_iter: int | None = None  # defaults to the system dimension
    restart: int | None = None        # None = full GMRES
    solver_precond: str | None = None  # None | "jacobi" | "ilu0"
    ilu_pivot_guard: float = 0.0

    def __post_init__(self):
        if self.gmres_tol <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class DirectFactor:
    """Sparse LU with a pivot-based conditioning proxy."""
    lu: object
    pivot_ratio: float
    matrix: sp.csr_matrix

    def solve(self, b: np.ndarray, refine: int = 2) -> np.ndarray:
        x = self.lu.solve(b)
        for _ in range(refine):
            x = x + self.lu.solve(b - self.matrix @ x)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("non-finite entries in the solution")
        return x


def factorize(A) -> DirectFactor:
    A = sp.csr_matrix(A)
    try:
        lu = sla.splu(A.tocsc())
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from exc
    u_diag = np.abs(lu.U.diagonal())
    if not np.all(np.isfinite(u_diag)):
        raise SingularMatrixError("non-finite pivots")
    u_max = u_diag.max()
    u_min = u_diag.min()
    if u_min < 1e-300 * u_max:
        raise SingularMatrixError(
            f"pivot ratio {u_min:.3e}/{u_max:.3e} below the working range")
    return DirectFactor(lu=lu, pivot_ratio=float(u_max / max(u_min, 5e-324)),
                        matrix=A)


def direct_solve(A, b: np.ndarray) -> np.ndarray:
    """Pivoted sparse LU solve with two steps of iterative refinement."""
    return factorize(A).solve(np.asarray(b, dtype=float))


class JacobiPreconditioner:
    def __init__(self, A):
        d = np.asarray(sp.csr_matrix(A).diagonal(), dtype=float)
        if np.any(d == 0.0):
            raise SingularMatrixError("zero diagonal entry")
        self._inv = 1.0 / d

    def solve(self, v: np.ndarray) -> np.ndarray:
        return self._inv * v


class ILU0Preconditioner:
    """Incomplete LU with zero fill-in on the matrix's own pattern."""

    def __init__(self, L, U, dense: bool):
        self._L = L
        self._U = U
        self._dense = dense

    def solve(self, v: np.ndarray) -> np.ndarray:
        if self._dense:
            y = scipy.linalg.solve_triangular(self._L, v, lower=True,
                                              unit_diagonal=True)
            return scipy.linalg.solve_triangular(self._U, y, lower=False)
        y = _csr_lower_solve(self._L, v)
        return _csr_upper_solve(self._U, y)


def _csr_lower_solve(L, b):
    indptr, indices, data = L.indptr, L.indices, L.data
    x = b.astype(float).copy()
    for i in range(len(b)):
        s, e = indptr[i], indptr[i + 1]
        cols = indices[s:e]
        below = cols < i
        x[i] -= data[s:e][below] @ x[cols[below]]
    return x


def _csr_upper_solve(U, b):
    indptr, indices, data = U.indptr, U.indices, U.data
    n = len(b)
    x = b.astype(float).copy()
    for i in range(n - 1, -1, -1):
        s, e = indptr[i], indptr[i + 1]
        cols = indices[s:e]
        above = cols > i
        x[i] -= data[s:e][above] @ x[cols[above]]
        diag = data[s:e][cols == i]
        x[i] /= diag[0]
    return x


def build_ilu0(A, pivot_guard: float = 0.0) -> ILU0Preconditioner:
    """Factor A ≈ L U with both factors restricted to A's sparsity pattern.

    `pivot_guard` > 0 replaces pivots smaller than guard*max|row| by that
    bound (sign kept), which keeps the sweeps bounded on indefinite systems;
    an exact zero pivot without a guard is an error, and the caller decides
    any fallback.
    """
    A = sp.csr_matrix(A, copy=True)
    A.sort_indices()
    n = A.shape[0]
    indptr, indices, data = A.indptr, A.indices, A.data

    diag_pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        s, e = indptr[i], indptr[i + 1]
        hit = np.searchsorted(indices[s:e], i)
        if hit < e - s and indices[s + hit] == i:
            diag_pos[i] = s + hit
    if np.any(diag_pos < 0):
        raise SingularMatrixError("matrix has structurally zero diagonal entries")

    for i in range(n):
        s, e = indptr[i], indptr[i + 1]
        cols_i = indices[s:e]
        for idx in range(s, e):
            k = indices[idx]
            if k >= i:
                break
            ukk = data[diag_pos[k]]
            if ukk == 0.0:
                raise SingularMatrixError(f"zero pivot at row {k} during ILU(0)")
            data[idx] /= ukk
            lik = data[idx]
            ks, ke = indptr[k], indptr[k + 1]
            cols_k = indices[ks:ke]
            upper = cols_k > k
            if not upper.any():
                continue
            cols_kj = cols_k[upper]
            vals_kj = data[ks:ke][upper]
            pos = np.searchsorted(cols_i, cols_kj)
            valid = (pos < len(cols_i))
            valid[valid] &= cols_i[pos[valid]] == cols_kj[valid]
            data[s + pos[valid]] -= lik * vals_kj[valid]
        if pivot_guard > 0.0:
            dpos = diag_pos[i]
            floor = pivot_guard * np.abs(data[s:e]).max()
            if abs(data[dpos]) < floor:
                data[dpos] = floor if data[dpos] >= 0.0 else -floor
    if np.any(data[diag_pos] == 0.0):
        raise SingularMatrixError("zero pivot on the ILU(0) diagonal")

    L = sp.tril(A, k=-1).tocsr() + sp.eye(n, format="csr")
    U = sp.triu(A, k=0).tocsr()
    dense = n <= _DENSE_TRIANGULAR_LIMIT
    if dense:
        return ILU0Preconditioner(L.toarray(), U.toarray(), dense=True)
    return ILU0Preconditioner(L, U, dense=False)


def make_solver_preconditioner(A, name: str | None, ilu_pivot_guard: float = 0.0):
    if name in (None, "none"):
        return None
    if name == "jacobi":
        return JacobiPreconditioner(A)
    if name == "ilu0":
        return build_ilu0(A, pivot_guard=ilu_pivot_guard)
    raise ValueError(f"unknown solver preconditioner {name!r}")


@dataclass
class GmresResult:
    x: np.ndarray
    n_itr: int
    converged: bool
    residual_norm: float


def gmres_solve(A, b: np.ndarray, config: SolverConfig | None = None,
                M=None) -> GmresResult:
    """Right-preconditioned GMRES with an absolute true-residual stop.

    Returns the iterate even on failure; `n_itr` counts Krylov iterations
    across restart cycles.
    """
    config = config or SolverConfig(method="gmres")
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    tol = config.gmres_tol
    max_iter = config.gmres_max_iter or n
    cycle = config.restart or max_iter

    apply_m = M.solve if M is not None else (lambda v: v)
    x = np.zeros(n)
    total = 0

    r = b - A @ x
    beta = np.linalg.norm(r)
    if beta < tol:
        return GmresResult(x, 0, True, float(beta))

    while total < max_iter:
        m = min(cycle, max_iter - total)
        V = np.empty((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        breakdown = False
        for j in range(m):
            w = A @ apply_m(V[j])
            for i in range(j + 1):
                H[i, j] = V[i] @ w
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            if H[j + 1, j] > 0.0:
                V[j + 1] = w / H[j + 1, j]
            else:
                breakdown = True
            for i in range(j):
                h1 = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = h1
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            k = j + 1
            if abs(g[j + 1]) < tol or breakdown:
                break
        y = scipy.linalg.solve_triangular(H[:k, :k], g[:k], lower=False)
        x = x + apply_m(V[:k].T @ y)
        r = b - A @ x
        beta = np.linalg.norm(r)
        if beta < tol:
            return GmresResult(x, total, True, float(beta))
        if breakdown:
            break
    return GmresResult(x, total, False, float(beta))


@dataclass
class LinearProblem:
    """Adapts an assembled linear system to the Newton driver interface."""
    system: LinearSystem

    @property
    def ndof(self) -> int:
        return self.system.ndof

    @property
    def dirichlet_map(self) -> dict:
        return self.system.dirichlet_map

    def residual(self, u_hat: np.ndarray) -> np.ndarray:
        return residual(self.system, u_hat)

    def jacobian(self, u_hat: np.ndarray):
        return jacobian(self.system)


@dataclass
class NewtonResult:
    u_hat: np.ndarray
    u_tilde: np.ndarray
    n_iterations: int
    converged: bool
    residual_norms: list
    transformed: object          # last TransformedSystem
    preconditioner: GeometricPreconditioner
    gmres: GmresResult | None = None


def newton_solve(problem, P: GeometricPreconditioner | None = None,
                 solver: SolverConfig | None = None, tol_drop: float = 1e-10,
                 max_iter: int = 20, u0: np.ndarray | None = None,
                 rebuild=None) -> NewtonResult:
    """Solve R(u) = 0 in the transformed space.

    The initial guess is mapped into the transformed space, each iteration
    scales the current residual/Jacobian, solves for the transformed update
    and monitors the transformed residual drop. `rebuild`, when given, is
    called as rebuild(iteration) and may return a fresh preconditioner
    (moving-interface hook; unused for static geometry).
    """
    solver = solver or SolverConfig()
    ndof = problem.ndof
    if P is None:
        P = identity_preconditioner(ndof)
    dirichlet = problem.dirichlet_map
    dir_dofs = np.asarray(sorted(dirichlet), dtype=np.int64)

    u_hat0 = np.zeros(ndof) if u0 is None else np.asarray(u0, dtype=float).copy()
    for d, v in dirichlet.items():
        u_hat0[d] = v
    u_tilde = transform_initial_guess(u_hat0, P)
    for d in dir_dofs:
        u_tilde[d] = u_hat0[d]  # prescribed values are never scaled

    norms: list[float] = []
    norm0 = None
    converged = False
    ts = None
    last_gmres = None
    n_solves = 0

    for it in range(max_iter + 1):
        if rebuild is not None:
            fresh = rebuild(it)
            if fresh is not None:
                P = fresh
        u_hat = untransform_solution(u_tilde, P)
        for d, v in dirichlet.items():
            u_hat[d] = v
        r = problem.residual(u_hat)
        jac = problem.jacobian(u_hat)
        ts = transform_system(r, jac, P, dir_dofs)
        rnorm = float(np.linalg.norm(ts.r))
        norms.append(rnorm)
        if norm0 is None:
            norm0 = rnorm
            if norm0 == 0.0:
                converged = True
                break
        elif rnorm <= tol_drop * norm0:
            converged = True
            break
        if it == max_iter:
            break
        if solver.method == "direct":
            delta = direct_solve(ts.j, -ts.r)
        else:
            M = make_solver_preconditioner(ts.j, solver.solver_precond,
                                           solver.ilu_pivot_guard)
            last_gmres = gmres_solve(ts.j, -ts.r, solver, M)
            if not last_gmres.converged:
                raise SingularMatrixError(
                    f"GMRES stalled at residual {last_gmres.residual_norm:.3e} "
                    f"after {last_gmres.n_itr} iterations")
            delta = last_gmres.x
        u_tilde[ts.kept] += delta
        n_solves += 1

    if not converged:
        err = SingularMatrixError(
            f"no convergence after {n_solves} iterations "
            f"(residual {norms[-1]:.3e} of {norm0:.3e})")
        err.last_iterate = untransform_solution(u_tilde, P)
        raise err
    u_hat = untransform_solution(u_tilde, P)
    for d, v in dirichlet.items():
        u_hat[d] = v
    return NewtonResult(u_hat=u_hat, u_tilde=u_tilde, n_iterations=n_solves,
                        converged=converged, residual_norms=norms,
                        transformed=ts, preconditioner=P, gmres=last_gmres)
