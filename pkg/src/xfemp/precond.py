"""Geometric preconditioning: diagonal DOF scaling built from basis-function
integrals over each DOF's region of influence, plus constraining of DOFs
whose scaling exceeds a tolerance.

The scaling needs only the mesh, the element partitions and the enrichment
table, so it is available before any system matrix exists. DOFs whose nodes
touch no intersected element keep a scaling of exactly 1. The max over the
support runs only over elements where the DOF actively interpolates its
phase; an uncut support element therefore pins the scaling at 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cutcell import triangle_quadrature
from .mesh import element_basis


@dataclass(frozen=True)
class GeometricPreconditioner:
    diag: np.ndarray         # per-DOF scaling, >= 1 for the geometric kinds
    constrained: np.ndarray  # sorted DOF ids forced to zero and removed
    kind: str                # "identity" | "TN" | "TB" | "Tjac"

    @property
    def n_constrained(self) -> int:
        return len(self.constrained)

    def with_constraints(self, constrained) -> "GeometricPreconditioner":
        return GeometricPreconditioner(self.diag,
                                       np.asarray(sorted(constrained), dtype=np.int64),
                                       self.kind)


@dataclass(frozen=True)
class TransformedSystem:
    r: np.ndarray        # scaled residual on the kept DOFs
    j: sp.csr_matrix     # congruence-scaled Jacobian on the kept DOFs
    kept: np.ndarray     # global DOF ids of the rows/columns that remain


def identity_preconditioner(ndof: int) -> GeometricPreconditioner:
    return GeometricPreconditioner(np.ones(ndof), np.empty(0, dtype=np.int64),
                                   "identity")


def _influence_ratios(mesh, partitions, table, use_gradient: bool) -> np.ndarray:
    """max_e (region integral / element integral) per DOF, in (0, 1]."""
    # element-wide integrals of N_a and |grad N_a|^2 are corner-independent
    # on a uniform rectangle mesh
    denom_n = mesh.element_area / 4.0
    denom_b = mesh.dy / (3.0 * mesh.dx) + mesh.dx / (3.0 * mesh.dy)
    denom = denom_b if use_gradient else denom_n

    ratios = np.ones(table.total_dofs)
    for d in range(table.total_dofs):
        node = int(table.dof_node[d])
        best = 0.0
        whole = False
        for e, r in table.dof_supports[d]:
            part = partitions[e]
            if not part.is_cut:
                whole = True
                break
            a = int(np.flatnonzero(mesh.element_nodes[e] == node)[0])
            num = 0.0
            for t in part.region_triangles(r):
                rule = triangle_quadrature(part.tri_vertices[t], 2)
                n, grads = element_basis(mesh, e, rule.points)
                if use_gradient:
                    num += rule.weights @ (grads[:, a, 0] ** 2 + grads[:, a, 1] ** 2)
                else:
                    num += rule.weights @ n[:, a]
            best = max(best, num / denom)
        if whole:
            continue
        if best <= 0.0:
            raise AssertionError(
                f"DOF {d} has an empty region of influence; the enrichment "
                "table should have removed it")
        ratios[d] = min(best, 1.0)
    return ratios


def build_tn(mesh, partitions, table) -> np.ndarray:
    """Diagonal scaling from shape-function integrals (value type)."""
    return _influence_ratios(mesh, partitions, table, use_gradient=False) ** -0.5


def build_tb(mesh, partitions, table) -> np.ndarray:
    """Diagonal scaling from shape-gradient integrals (gradient type).

    The better fit for diffusion-dominated operators.
    """
    return _influence_ratios(mesh, partitions, table, use_gradient=True) ** -0.5


def build_tjac(J) -> np.ndarray:
    """Inverse square root of the assembled Jacobian diagonal."""
    d = np.asarray(J.diagonal(), dtype=float)
    if np.any(d <= 0.0):
        bad = np.flatnonzero(d <= 0.0)
        raise ValueError(f"non-positive Jacobian diagonal at DOFs {bad[:5]}"
                         f"{'...' if len(bad) > 5 else ''}")
    return d ** -0.5


def mark_constrained(diag: np.ndarray, t_tol: float) -> np.ndarray:
    """DOFs whose scaling exceeds the tolerance; they get pinned to zero."""
    if not t_tol > 1.0:
        raise ValueError(f"tolerance must exceed 1, got {t_tol}")
    return np.flatnonzero(np.asarray(diag) > t_tol)


def make_preconditioner(diag, kind: str, t_tol: float = np.inf,
                        constrain_diag=None) -> GeometricPreconditioner:
    """Bundle a scaling vector with its constrained set.

    `constrain_diag` lets an identity run reuse the geometric scaling purely
    as the constraining criterion without applying it to the system.
    """
    basis = diag if constrain_diag is None else constrain_diag
    constrained = (np.empty(0, dtype=np.int64) if np.isinf(t_tol)
                   else np.asarray(mark_constrained(basis, t_tol), dtype=np.int64))
    return GeometricPreconditioner(np.asarray(diag, dtype=float), constrained, kind)


def kept_dofs(ndof: int, P: GeometricPreconditioner, dirichlet_dofs) -> np.ndarray:
    mask = np.ones(ndof, dtype=bool)
    mask[np.asarray(dirichlet_dofs, dtype=np.int64)] = False
    mask[P.constrained] = False
    return np.flatnonzero(mask)


def transform_system(R: np.ndarray, J, P: GeometricPreconditioner,
                     dirichlet_dofs=()) -> TransformedSystem:
    """Scale residual and Jacobian and drop fixed rows/columns.

    For a diagonal scaling T the result is r_i -> T_i r_i and
    J_ij -> T_i J_ij T_j, restricted to DOFs that are neither prescribed
    boundary values nor constrained to zero.
    """
    ndof = len(R)
    kept = kept_dofs(ndof, P, dirichlet_dofs)
    t = sp.diags(P.diag)
    j_scaled = (t @ sp.csr_matrix(J) @ t).tocsr()
    return TransformedSystem(r=(P.diag * R)[kept],
                             j=j_scaled[kept][:, kept].tocsr(),
                             kept=kept)


def untransform_solution(u_tilde: np.ndarray, P: GeometricPreconditioner) -> np.ndarray:
    """Physical solution from the transformed one; constrained DOFs become 0."""
    u_hat = P.diag * np.asarray(u_tilde, dtype=float)
    u_hat[P.constrained] = 0.0
    return u_hat


def transform_initial_guess(u_hat: np.ndarray, P: GeometricPreconditioner) -> np.ndarray:
    """Inverse of the solution transform on unconstrained DOFs."""
    u_tilde = np.asarray(u_hat, dtype=float) / P.diag
    u_tilde[P.constrained] = 0.0
    return u_tilde
