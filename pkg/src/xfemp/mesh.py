"""Structured quadrilateral meshes and bilinear basis evaluation.

Only axis-aligned rectangular domains are supported; node numbering is
x-fastest row-major and element corners are counter-clockwise starting at
the lower-left, which fixes all downstream DOF orderings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BOUNDARY_TAGS = ("left", "right", "bottom", "top")

# local corner order: lower-left, lower-right, upper-right, upper-left
_REF_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
# local edges in boundary order (bottom, right, top, left)
LOCAL_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))
_EDGE_OF_TAG = {"bottom": 0, "right": 1, "top": 2, "left": 3}


class DegenerateElementError(ValueError):
    """Raised when an element's Jacobian determinant is not positive."""


@dataclass(frozen=True)
class StructuredMesh:
    nx: int
    ny: int
    bounds: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    node_coords: np.ndarray  # (n_nodes, 2)
    element_nodes: np.ndarray  # (n_elements, 4), CCW from lower-left
    boundary_nodes: dict = field(repr=False)  # tag -> node-id array

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.element_nodes.shape[0]

    @property
    def dx(self) -> float:
        return (self.bounds[1] - self.bounds[0]) / self.nx

    @property
    def dy(self) -> float:
        return (self.bounds[3] - self.bounds[2]) / self.ny

    @property
    def element_area(self) -> float:
        return self.dx * self.dy

    def element_coords(self, e: int) -> np.ndarray:
        return self.node_coords[self.element_nodes[e]]

    def elements_of_node(self, i: int) -> np.ndarray:
        """Element patch of a node (the elements whose corners include it)."""
        return self._node_elements[i]

    @property
    def _node_elements(self):
        # cached adjacency, built on first use
        cache = getattr(self, "_node_elements_cache", None)
        if cache is None:
            lists = [[] for _ in range(self.n_nodes)]
            for e, nodes in enumerate(self.element_nodes):
                for i in nodes:
                    lists[i].append(e)
            cache = [np.asarray(l, dtype=np.int64) for l in lists]
            object.__setattr__(self, "_node_elements_cache", cache)
        return cache

    def boundary_edges(self, tag: str):
        """Yield (element, (local_a, local_b)) pairs for one boundary side."""
        if tag not in BOUNDARY_TAGS:
            raise ValueError(f"unknown boundary tag {tag!r}")
        le = LOCAL_EDGES[_EDGE_OF_TAG[tag]]
        if tag == "bottom":
            elems = np.arange(self.nx)
        elif tag == "top":
            elems = np.arange(self.nx) + (self.ny - 1) * self.nx
        elif tag == "left":
            elems = np.arange(self.ny) * self.nx
        else:
            elems = np.arange(self.ny) * self.nx + (self.nx - 1)
        return [(int(e), le) for e in elems]


def build_structured_mesh(nx: int, ny: int, bounds) -> StructuredMesh:
    """Build a uniform quad mesh on an axis-aligned rectangle.

    Parameters
    ----------
    nx, ny : int
        Element counts per axis, both at least 1.
    bounds : (xmin, xmax, ymin, ymax)

    Returns
    -------
    StructuredMesh with (nx+1)(ny+1) nodes and nx*ny elements.
    """
    xmin, xmax, ymin, ymax = (float(b) for b in bounds)
    if nx < 1 or ny < 1:
        raise ValueError(f"element counts must be positive, got nx={nx}, ny={ny}")
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"degenerate bounds {bounds}")

    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row-major in y, x-fastest inside a row
    node_coords = np.column_stack([X.ravel(), Y.ravel()])

    elems = np.empty((nx * ny, 4), dtype=np.int64)
    for j in range(ny):
        for i in range(nx):
            n0 = j * (nx + 1) + i
            elems[j * nx + i] = (n0, n0 + 1, n0 + nx + 2, n0 + nx + 1)

    ids = np.arange((nx + 1) * (ny + 1))
    col = ids % (nx + 1)
    row = ids // (nx + 1)
    boundary_nodes = {
        "left": ids[col == 0],
        "right": ids[col == nx],
        "bottom": ids[row == 0],
        "top": ids[row == ny],
    }
    return StructuredMesh(nx, ny, (xmin, xmax, ymin, ymax), node_coords, elems,
                          boundary_nodes)


def shape_values(xi: float, eta: float) -> np.ndarray:
    """Bilinear shape functions on the [-1,1]^2 reference square.

    Returns the 4 values in local corner order; they sum to 1.
    """
    return 0.25 * np.array([
        (1.0 - xi) * (1.0 - eta),
        (1.0 + xi) * (1.0 - eta),
        (1.0 + xi) * (1.0 + eta),
        (1.0 - xi) * (1.0 + eta),
    ])


def shape_reference_gradients(xi: float, eta: float) -> np.ndarray:
    """d/d(xi,eta) of the four bilinear shape functions, shape (4, 2)."""
    return 0.25 * np.array([
        [-(1.0 - eta), -(1.0 - xi)],
        [+(1.0 - eta), -(1.0 + xi)],
        [+(1.0 + eta), +(1.0 + xi)],
        [-(1.0 + eta), +(1.0 - xi)],
    ])


def element_local_coords(mesh: StructuredMesh, e: int, pts: np.ndarray):
    """Reference coordinates of physical points inside an axis-aligned element."""
    c0 = mesh.element_coords(e)[0]
    pts = np.atleast_2d(pts)
    xi = 2.0 * (pts[:, 0] - c0[0]) / mesh.dx - 1.0
    eta = 2.0 * (pts[:, 1] - c0[1]) / mesh.dy - 1.0
    return xi, eta


def element_basis(mesh: StructuredMesh, e: int, pts: np.ndarray):
    """Shape values and physical gradients at points of one element.

    Exploits the axis-aligned uniform mesh: the map is affine with
    diagonal Jacobian. Returns (n, 4) values and (n, 4, 2) gradients.
    """
    xi, eta = element_local_coords(mesh, e, pts)
    n = 0.25 * np.stack([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
                         (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)], axis=1)
    sx, sy = 2.0 / mesh.dx, 2.0 / mesh.dy
    gx = 0.25 * np.stack([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)], axis=1) * sx
    gy = 0.25 * np.stack([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)], axis=1) * sy
    return n, np.stack([gx, gy], axis=2)


def shape_gradients(xi: float, eta: float, element_coords: np.ndarray):
    """Physical gradients of the bilinear basis and the Jacobian determinant.

    Parameters
    ----------
    element_coords : (4, 2) corner coordinates, CCW from lower-left.

    Returns
    -------
    grads : (4, 2) gradients in physical coordinates (their sum is zero).
    det_j : Jacobian determinant of the reference-to-physical map.
    """
    dref = shape_reference_gradients(xi, eta)
    jac_t = dref.T @ np.asarray(element_coords, dtype=float)  # (2, 2), (dx/dxi)^T
    det_j = jac_t[0, 0] * jac_t[1, 1] - jac_t[0, 1] * jac_t[1, 0]
    if det_j <= 0.0:
        raise DegenerateElementError(f"non-positive Jacobian determinant {det_j}")
    inv_jac = np.array([[jac_t[1, 1], -jac_t[1, 0]],
                        [-jac_t[0, 1], jac_t[0, 0]]]) / det_j
    return dref @ inv_jac, det_j
