"""Assembly of the diffusion system K u = f on partitioned meshes.

Volume terms are integrated per phase region; continuity at the embedded
interface is enforced either by a symmetric penalty-consistency form or by
an elementwise-constant multiplier that is condensed away, leaving segment-
averaged jump/flux couplings. Dirichlet values are imposed strongly on the
boundary-node DOFs of the phase present at each node; the assembled matrix
itself is kept symmetric, rows are only replaced when the Jacobian with
boundary conditions is requested.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cutcell import locate_region, segment_quadrature, triangle_quadrature
from .levelset import edge_zero_crossing
from .mesh import element_basis, element_local_coords, shape_values

_TINY_AREA_FRACTION = 1e-14  # triangles below this fraction of A^e are skipped

_KXX = np.array([[2, -2, -1, 1], [-2, 2, 1, -1], [-1, 1, 2, -2], [1, -1, -2, 2]],
                dtype=float)
_KYY = np.array([[2, 1, -1, -2], [1, 2, -2, -1], [-1, -2, 2, 1], [-2, -1, 1, 2]],
                dtype=float)


@dataclass(frozen=True)
class MaterialSpec:
    k1: float
    k2: float
    source: object = None  # optional callable f(x, y)

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("conductivities must be positive")

    def k(self, phase: int) -> float:
        return self.k1 if phase == 1 else self.k2


@dataclass(frozen=True)
class BoundaryConditions:
    dirichlet: tuple = ()  # ((tag, value-or-callable), ...)
    neumann: tuple = ()    # ((tag, flux-or-callable), ...); untagged sides are adiabatic

    def __post_init__(self):
        d = {t for t, _ in self.dirichlet}
        n = {t for t, _ in self.neumann}
        if d & n:
            raise ValueError(f"tags {d & n} appear in both BC lists")


@dataclass(frozen=True)
class StabilizedLagrange:
    gamma: float

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("constraint factor must be positive")


@dataclass(frozen=True)
class Nitsche:
    gamma: float

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("constraint factor must be positive")


ConstraintMethod = StabilizedLagrange | Nitsche


@dataclass
class LinearSystem:
    K: sp.csr_matrix
    f: np.ndarray
    dirichlet_map: dict  # dof -> prescribed value
    ndof: int
    _jac: sp.csr_matrix = field(default=None, repr=False)

    @property
    def dirichlet_dofs(self) -> np.ndarray:
        return np.asarray(sorted(self.dirichlet_map), dtype=np.int64)

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.ndof, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    def apply_dirichlet(self, u: np.ndarray) -> np.ndarray:
        out = u.copy()
        for d, v in self.dirichlet_map.items():
            out[d] = v
        return out


def _bc_value(value, x):
    return value(x[0], x[1]) if callable(value) else float(value)


def rectangle_stiffness(dx: float, dy: float) -> np.ndarray:
    """Exact unit-conductivity stiffness of an uncut dx-by-dy element."""
    return (dy / (6.0 * dx)) * _KXX + (dx / (6.0 * dy)) * _KYY


def assemble(mesh, field_or_phi, partitions, table, material: MaterialSpec,
             bcs: BoundaryConditions, method: ConstraintMethod) -> LinearSystem:
    """Assemble the conduction matrix, load vector and Dirichlet map."""
    phi = getattr(field_or_phi, "phi", field_or_phi)
    ndof = table.total_dofs
    k_rect = rectangle_stiffness(mesh.dx, mesh.dy)
    area_cut = _TINY_AREA_FRACTION * mesh.element_area

    rows, cols, data = [], [], []
    f = np.zeros(ndof)

    # volume terms: uncut elements reuse the rectangle matrix in one batch
    uncut, cut = [], []
    for e, part in enumerate(partitions):
        (cut if part.is_cut else uncut).append(e)
    if uncut:
        dofs = np.stack([table.element_region_dofs[e][0] for e in uncut])
        kvals = np.array([material.k(int(partitions[e].region_phase[0]))
                          for e in uncut])
        rows.append(np.repeat(dofs, 4, axis=1).ravel())
        cols.append(np.tile(dofs, (1, 4)).ravel())
        data.append((kvals[:, None, None] * k_rect).ravel())

    for e in cut:
        part = partitions[e]
        erd = table.element_region_dofs[e]
        for r in range(part.n_regions):
            k = material.k(int(part.region_phase[r]))
            dofs = erd[r]
            kloc = np.zeros((4, 4))
            for t in part.region_triangles(r):
                if part.tri_area[t] < area_cut:
                    continue
                rule = triangle_quadrature(part.tri_vertices[t], 2)
                _, grads = element_basis(mesh, e, rule.points)
                kloc += np.einsum("q,qad,qbd->ab", rule.weights, grads, grads)
            rows.append(np.repeat(dofs, 4))
            cols.append(np.tile(dofs, 4))
            data.append((k * kloc).ravel())

    # interface coupling per connected segment group
    for e in cut:
        part = partitions[e]
        erd = table.element_region_dofs[e]
        groups: dict = {}
        for seg in part.segments:
            groups.setdefault(seg.group, []).append(seg)
        for segs in groups.values():
            dofs = np.concatenate([erd[segs[0].region_neg], erd[segs[0].region_pos]])
            kloc = np.zeros((8, 8))
            if isinstance(method, StabilizedLagrange):
                jump_int = np.zeros(8)
                flux_int = np.zeros(8)
                length = 0.0
                for seg in segs:
                    rule = segment_quadrature(seg.endpoints, 2)
                    n, grads = element_basis(mesh, e, rule.points)
                    gn = grads @ seg.normal
                    jump = np.concatenate([n, -n], axis=1)
                    flux = 0.5 * np.concatenate(
                        [material.k1 * gn, material.k2 * gn], axis=1)
                    jump_int += rule.weights @ jump
                    flux_int += rule.weights @ flux
                    length += rule.weights.sum()
                if length > 0.0:
                    kloc = (-np.outer(jump_int, flux_int)
                            - np.outer(flux_int, jump_int)
                            + method.gamma * np.outer(jump_int, jump_int)) / length
            else:
                for seg in segs:
                    rule = segment_quadrature(seg.endpoints, 2)
                    n, grads = element_basis(mesh, e, rule.points)
                    gn = grads @ seg.normal
                    jump = np.concatenate([n, -n], axis=1)
                    flux = 0.5 * np.concatenate(
                        [material.k1 * gn, material.k2 * gn], axis=1)
                    for q, w in enumerate(rule.weights):
                        kloc += w * (-np.outer(jump[q], flux[q])
                                     - np.outer(flux[q], jump[q])
                                     + method.gamma * np.outer(jump[q], jump[q]))
            rows.append(np.repeat(dofs, 8))
            cols.append(np.tile(dofs, 8))
            data.append(kloc.ravel())

    # volumetric source
    if material.source is not None:
        for e, part in enumerate(partitions):
            erd = table.element_region_dofs[e]
            for r in range(part.n_regions):
                dofs = erd[r]
                for t in part.region_triangles(r):
                    if part.tri_area[t] < area_cut:
                        continue
                    rule = triangle_quadrature(part.tri_vertices[t], 2)
                    n, _ = element_basis(mesh, e, rule.points)
                    vals = np.array([material.source(p[0], p[1])
                                     for p in rule.points])
                    f[dofs] += (rule.weights * vals) @ n

    # Neumann flux on tagged sides, split by phase where the edge is cut
    for tag, flux in bcs.neumann:
        for e, (a, b) in mesh.boundary_edges(tag):
            part = partitions[e]
            na, nb = mesh.element_nodes[e][a], mesh.element_nodes[e][b]
            pa, pb = mesh.node_coords[na], mesh.node_coords[nb]
            fa, fb = phi[na], phi[nb]
            if fa * fb > 0:
                pieces = [(pa, pb)]
            else:
                x = edge_zero_crossing(fa, fb, pa, pb)
                pieces = [(pa, x), (x, pb)]
            for p0, p1 in pieces:
                mid = 0.5 * (np.asarray(p0) + np.asarray(p1))
                phase = 1 if _phi_at(mesh, e, phi, mid) < 0 else 2
                region = locate_region(part, mid, phase)
                dofs = table.element_region_dofs[e][region]
                rule = segment_quadrature([p0, p1], 2)
                if rule.weights.size == 0:
                    continue
                n, _ = element_basis(mesh, e, rule.points)
                vals = np.array([_bc_value(flux, p) for p in rule.points])
                f[dofs] += (rule.weights * vals) @ n

    K = sp.coo_matrix((np.concatenate(data),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(ndof, ndof)).tocsr()

    dirichlet_map: dict = {}
    for tag, value in bcs.dirichlet:
        for node in mesh.boundary_nodes[tag]:
            node = int(node)
            phase = 1 if phi[node] < 0 else 2
            for d in table.dofs_at(node, phase):
                if table.dof_touches_node[d]:
                    dirichlet_map[d] = _bc_value(value, mesh.node_coords[node])

    return LinearSystem(K=K, f=f, dirichlet_map=dirichlet_map, ndof=ndof)


def _phi_at(mesh, e, phi, point):
    xi, eta = element_local_coords(mesh, e, point)
    return float(shape_values(xi[0], eta[0]) @ phi[mesh.element_nodes[e]])


def residual(sys: LinearSystem, u_hat: np.ndarray) -> np.ndarray:
    """K u - f, with Dirichlet rows replaced by (u_d - prescribed value)."""
    u_hat = np.asarray(u_hat, dtype=float)
    if u_hat.shape != (sys.ndof,):
        raise ValueError(f"expected solution vector of length {sys.ndof}, "
                         f"got shape {u_hat.shape}")
    r = sys.K @ u_hat - sys.f
    for d, v in sys.dirichlet_map.items():
        r[d] = u_hat[d] - v
    return r


def jacobian(sys: LinearSystem) -> sp.csr_matrix:
    """K with Dirichlet rows replaced by identity rows."""
    if sys._jac is None:
        jac = sys.K.tolil(copy=True)
        for d in sys.dirichlet_map:
            jac.rows[d] = [d]
            jac.data[d] = [1.0]
        sys._jac = jac.tocsr()
    return sys._jac


def interface_jump_values(mesh, partitions, table, u: np.ndarray, order: int = 2):
    """Jump of a solution at interface quadrature points, per cut element."""
    jumps = []
    for e, part in enumerate(partitions):
        erd = table.element_region_dofs[e]
        for seg in part.segments:
            rule = segment_quadrature(seg.endpoints, order)
            n, _ = element_basis(mesh, e, rule.points)
            u_neg = n @ u[erd[seg.region_neg]]
            u_pos = n @ u[erd[seg.region_pos]]
            jumps.extend((u_neg - u_pos).tolist())
    return np.asarray(jumps)
