"""Condition numbers, area-ratio metrics, field evaluation and error norms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .cutcell import locate_region
from .mesh import element_basis

_DENSE_COND_LIMIT = 5000


@dataclass
class SweepRecord:
    """One row of a sweep experiment."""
    r: float
    method: str
    precond_kind: str
    t_tol: float
    cond: float
    a_min: float
    e_l2: float
    n_itr_none: int
    n_itr_jac: int
    n_itr_ilu: int
    gmres_failed: str
    n_constrained: int
    dofs: int


def condition_number(A, dense_limit: int = _DENSE_COND_LIMIT) -> float:
    """2-norm condition number (extreme singular-value ratio).

    Dense computation up to `dense_limit` rows (eigenvalues for symmetric
    input, singular values otherwise); beyond that an iterative extreme
    singular-value estimate with ~1e-2 relative accuracy.
    """
    if sp.issparse(A):
        n = A.shape[0]
        if n > dense_limit:
            return _condition_number_iterative(A)
        M = A.toarray()
    else:
        M = np.asarray(A, dtype=float)
        if M.shape[0] > dense_limit:
            return _condition_number_iterative(sp.csr_matrix(M))
    if M.shape[0] != M.shape[1]:
        raise ValueError("condition number needs a square matrix")
    scale = np.abs(M).max()
    if scale == 0.0:
        return math.inf
    if np.abs(M - M.T).max() <= 1e-12 * scale:
        s = np.abs(scipy.linalg.eigvalsh(M))
    else:
        s = scipy.linalg.svdvals(M)
    smin, smax = s.min(), s.max()
    if smin == 0.0:
        return math.inf
    return float(smax / smin)


def _condition_number_iterative(A) -> float:
    A = sp.csc_matrix(A)
    smax = sla.svds(A, k=1, return_singular_vectors=False, tol=1e-3)[0]
    try:
        lu = sla.splu(A)
    except RuntimeError:
        return math.inf
    n = A.shape[0]
    inv_op = sla.LinearOperator((n, n), matvec=lu.solve,
                                rmatvec=lambda v: lu.solve(v, trans="T"))
    inv_norm = sla.svds(inv_op, k=1, return_singular_vectors=False, tol=1e-3)[0]
    return float(smax * inv_norm)


def min_area_ratio(partitions, symmetrized: bool = False) -> float:
    """Minimum over intersected elements of the phase-1/phase-2 area ratio.

    NaN when nothing is intersected. The symmetrized variant takes
    min(a1, a2)/max(a1, a2) per element instead of the printed a1/a2.
    """
    best = math.inf
    found = False
    for part in partitions:
        if not part.is_cut:
            continue
        found = True
        a1 = float(part.tri_area[part.tri_phase == 1].sum())
        a2 = float(part.tri_area[part.tri_phase == 2].sum())
        ratio = min(a1, a2) / max(a1, a2) if symmetrized else a1 / a2
        best = min(best, ratio)
    return best if found else math.nan


def l2_relative_error(u: np.ndarray, u_ref: np.ndarray) -> float:
    """||u - u_ref||_2 / ||u_ref||_2 over matching sample vectors."""
    u = np.asarray(u, dtype=float).ravel()
    u_ref = np.asarray(u_ref, dtype=float).ravel()
    if u.shape != u_ref.shape:
        raise ValueError("samples and reference have different shapes")
    denom = np.linalg.norm(u_ref)
    if denom == 0.0:
        raise ValueError("reference field has zero norm")
    return float(np.linalg.norm(u - u_ref) / denom)


def integrate_over_sweep(values) -> float:
    """Trapezoidal integral of (r, v) samples over the sweep range."""
    pts = list(values)
    if len(pts) < 2:
        raise ValueError("need at least two sweep samples")
    r = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(np.diff(r) <= 0):
        raise ValueError("sweep positions must be strictly increasing")
    return float(np.trapezoid(v, r))


def probe_grid(bounds, n: int = 101) -> np.ndarray:
    """Uniform n-by-n probe points over a rectangle, row-major."""
    xmin, xmax, ymin, ymax = bounds
    xs = np.linspace(xmin, xmax, n)
    ys = np.linspace(ymin, ymax, n)
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


def evaluate_solution(mesh, phi, partitions, table, u: np.ndarray,
                      points, interface_tol: float = 1e-9) -> np.ndarray:
    """Per-phase interpolation of a solution vector at arbitrary points.

    Points within `interface_tol` (in level-set units) of the interface are
    evaluated from the phase-1 side.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xmin, _, ymin, _ = mesh.bounds
    ex = np.clip(((pts[:, 0] - xmin) / mesh.dx).astype(int), 0, mesh.nx - 1)
    ey = np.clip(((pts[:, 1] - ymin) / mesh.dy).astype(int), 0, mesh.ny - 1)
    elems = ey * mesh.nx + ex

    out = np.empty(len(pts))
    for idx in range(len(pts)):
        e = int(elems[idx])
        p = pts[idx]
        part = partitions[e]
        n, _ = element_basis(mesh, e, p)
        if not part.is_cut:
            region = 0
        else:
            phi_p = float(n[0] @ phi[mesh.element_nodes[e]])
            phase = 2 if phi_p > interface_tol else 1
            region = locate_region(part, p, phase)
        dofs = table.element_region_dofs[e][region]
        out[idx] = n[0] @ u[dofs]
    return out
