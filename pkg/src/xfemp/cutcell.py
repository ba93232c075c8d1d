"""Interface-aligned triangulation of intersected quads and quadrature over
phase subdomains and interface segments.

A quad with nonzero nodal level-set values is split into convex sub-polygons
by the straight chords between edge zero-crossings, then fan-triangulated.
The ambiguous double-cut sign pattern (alternating corner signs) is resolved
by the interpolated value at the element centroid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .levelset import edge_zero_crossing
from .mesh import LOCAL_EDGES

_D4A, _D4B = 0.445948490915965, 0.091576213509771
_BARY = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    2: (np.array([[2 / 3, 1 / 6, 1 / 6],
                  [1 / 6, 2 / 3, 1 / 6],
                  [1 / 6, 1 / 6, 2 / 3]]), np.full(3, 1 / 3)),
    # six-point degree-4 rule: exact beyond the requested cubic order and,
    # unlike the four-point cubic rule, all weights are positive
    3: (np.array([[1 - 2 * _D4A, _D4A, _D4A],
                  [_D4A, 1 - 2 * _D4A, _D4A],
                  [_D4A, _D4A, 1 - 2 * _D4A],
                  [1 - 2 * _D4B, _D4B, _D4B],
                  [_D4B, 1 - 2 * _D4B, _D4B],
                  [_D4B, _D4B, 1 - 2 * _D4B]]),
        np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)),
}


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (n, 2) physical coordinates
    weights: np.ndarray  # (n,), summing to the measure of the entity


@dataclass(frozen=True)
class InterfaceSegment:
    endpoints: np.ndarray  # (2, 2)
    normal: np.ndarray     # unit, pointing from phase 1 into phase 2
    region_neg: int        # local region id on the phase-1 side
    region_pos: int        # local region id on the phase-2 side
    group: int             # connected-polyline id within the element

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.endpoints[1] - self.endpoints[0]))


@dataclass(frozen=True)
class ElementPartition:
    element_id: int
    area: float                   # full element area
    tri_vertices: np.ndarray      # (n_tri, 3, 2), positively oriented
    tri_phase: np.ndarray         # (n_tri,) in {1, 2}
    tri_region: np.ndarray        # (n_tri,) local region ids
    tri_area: np.ndarray          # (n_tri,)
    region_phase: np.ndarray      # (n_regions,) in {1, 2}
    segments: list = field(default_factory=list)

    @property
    def is_cut(self) -> bool:
        return len(self.segments) > 0

    @property
    def n_regions(self) -> int:
        return len(self.region_phase)

    def region_triangles(self, region: int) -> np.ndarray:
        return np.flatnonzero(self.tri_region == region)


def _signed_area(poly: np.ndarray) -> float:
    # anchored at the first vertex: sliver areas far below the coordinate
    # scale would cancel away in the raw shoelace formula
    x = poly[:, 0] - poly[0, 0]
    y = poly[:, 1] - poly[0, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _fan_triangles(poly: np.ndarray):
    """Fan triangulation of a convex CCW polygon; drops exact-zero slivers."""
    tris = []
    for k in range(1, len(poly) - 1):
        tri = np.array([poly[0], poly[k], poly[k + 1]])
        a = _signed_area(tri)
        if a < 0.0:
            raise ValueError("negatively oriented sub-triangle (non-CCW polygon?)")
        if a > 0.0:
            tris.append((tri, a))
    return tris


def _canonical_crossing(pa, pb, fa, fb):
    # evaluate with a coordinate-ordered operand pair so neighbouring
    # elements that share the edge produce bit-identical points
    if (pb[0], pb[1]) < (pa[0], pa[1]):
        return edge_zero_crossing(fb, fa, pb, pa)
    return edge_zero_crossing(fa, fb, pa, pb)


def _region_centroid(tris):
    c = np.zeros(2)
    total = 0.0
    for tri, a in tris:
        c += a * tri.mean(axis=0)
        total += a
    return c / total


def _segment_normal(p0, p1, centroid_neg, centroid_pos):
    t = p1 - p0
    n = np.array([t[1], -t[0]])
    n /= np.linalg.norm(n)
    if np.dot(n, centroid_pos - centroid_neg) < 0.0:
        n = -n
    return n


def partition_element(element_coords, nodal_phi, element_id: int = 0) -> ElementPartition:
    """Split one quad into phase-tagged triangles plus interface segments.

    Parameters
    ----------
    element_coords : (4, 2) corner coordinates, CCW from lower-left.
    nodal_phi : 4 nonzero level-set values (snapping already applied).
    """
    coords = np.asarray(element_coords, dtype=float)
    phi = np.asarray(nodal_phi, dtype=float)
    if np.any(phi == 0.0):
        raise ValueError("nodal level-set values must be nonzero")
    pos = phi > 0.0
    area = abs(_signed_area(coords))

    crossings = [None] * 4
    for k, (a, b) in enumerate(LOCAL_EDGES):
        if pos[a] != pos[b]:
            crossings[k] = _canonical_crossing(coords[a], coords[b], phi[a], phi[b])
    n_cross = sum(c is not None for c in crossings)

    polys: list[tuple[list, int]] = []  # (vertex list, phase)
    seg_defs: list[tuple] = []          # (p0, p1, poly_neg idx, poly_pos idx, group)

    if n_cross == 0:
        polys.append(([coords[0], coords[1], coords[2], coords[3]],
                      2 if pos[0] else 1))
    elif n_cross == 2:
        poly_neg: list = []
        poly_pos: list = []
        for k in range(4):
            (poly_pos if pos[k] else poly_neg).append(coords[k])
            if crossings[k] is not None:
                poly_neg.append(crossings[k])
                poly_pos.append(crossings[k])
        polys.append((poly_neg, 1))
        polys.append((poly_pos, 2))
        ks = [k for k in range(4) if crossings[k] is not None]
        seg_defs.append((crossings[ks[0]], crossings[ks[1]], 0, 1, 0))
    else:
        # alternating corner signs: connect through the centroid's phase
        centroid_positive = phi.mean() > 0.0
        hexagon: list = []
        iso_corners = []
        for k in range(4):
            if pos[k] == centroid_positive:
                hexagon.append(coords[k])
            else:
                iso_corners.append(k)
            hexagon.append(crossings[k])
        hex_phase = 2 if centroid_positive else 1
        polys.append((hexagon, hex_phase))
        for g, k in enumerate(iso_corners):
            prev = crossings[(k - 1) % 4]
            polys.append(([prev, coords[k], crossings[k]], 1 if hex_phase == 2 else 2))
            if hex_phase == 2:
                seg_defs.append((prev, crossings[k], 1 + g, 0, g))
            else:
                seg_defs.append((prev, crossings[k], 0, 1 + g, g))

    tri_v, tri_p, tri_r, tri_a = [], [], [], []
    region_phase = []
    region_tris = []
    for rid, (poly, phase) in enumerate(polys):
        tris = _fan_triangles(np.asarray(poly))
        region_phase.append(phase)
        region_tris.append(tris)
        for tri, a in tris:
            tri_v.append(tri)
            tri_p.append(phase)
            tri_r.append(rid)
            tri_a.append(a)

    segments = []
    for p0, p1, rneg, rpos, group in seg_defs:
        n = _segment_normal(np.asarray(p0), np.asarray(p1),
                            _region_centroid(region_tris[rneg]),
                            _region_centroid(region_tris[rpos]))
        segments.append(InterfaceSegment(np.array([p0, p1]), n, rneg, rpos, group))

    return ElementPartition(
        element_id=element_id,
        area=area,
        tri_vertices=np.asarray(tri_v),
        tri_phase=np.asarray(tri_p, dtype=np.int8),
        tri_region=np.asarray(tri_r, dtype=np.int16),
        tri_area=np.asarray(tri_a),
        region_phase=np.asarray(region_phase, dtype=np.int8),
        segments=segments,
    )


def partition_all(mesh, phi: np.ndarray) -> list[ElementPartition]:
    """Partition every element of a mesh against nodal level-set values."""
    return [partition_element(mesh.element_coords(e), phi[mesh.element_nodes[e]], e)
            for e in range(mesh.n_elements)]


def phase_area(partition: ElementPartition, phase: int) -> float:
    """Total area of one phase inside the element."""
    return float(partition.tri_area[partition.tri_phase == phase].sum())


def triangle_quadrature(triangle, order: int) -> QuadratureRule:
    """Symmetric rule on a physical triangle, exact for degree <= order."""
    tri = np.asarray(triangle, dtype=float)
    area = abs(_signed_area(tri))
    if area <= 0.0:
        raise ValueError("degenerate triangle")
    if order not in _BARY:
        raise ValueError(f"unsupported triangle quadrature order {order}")
    bary, w = _BARY[order]
    return QuadratureRule(bary @ tri, w * area)


def segment_quadrature(segment, order: int) -> QuadratureRule:
    """Gauss-Legendre rule with `order` points on a straight segment."""
    seg = np.asarray(segment, dtype=float)
    d = seg[1] - seg[0]
    length = float(np.linalg.norm(d))
    if length == 0.0:
        return QuadratureRule(np.empty((0, 2)), np.empty(0))
    t, w = np.polynomial.legendre.leggauss(order)
    pts = seg[0] + 0.5 * (t[:, None] + 1.0) * d
    return QuadratureRule(pts, 0.5 * length * w)


def locate_region(partition: ElementPartition, point, phase: int | None = None) -> int:
    """Local region id whose triangles contain the point.

    With `phase` given, only that phase's triangles are searched. Falls back
    to the nearest matching triangle when the point sits on a boundary to
    within roundoff.
    """
    p = np.asarray(point, dtype=float)
    scale = np.sqrt(partition.area)
    best, best_d = -1, np.inf
    for t in range(len(partition.tri_phase)):
        if phase is not None and partition.tri_phase[t] != phase:
            continue
        a, b, c = partition.tri_vertices[t]
        denom = _signed_area(np.array([a, b, c])) * 2.0
        l1 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / denom
        l2 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / denom
        l3 = 1.0 - l1 - l2
        d = -min(l1, l2, l3)
        if d < best_d:
            best_d = d
            best = int(partition.tri_region[t])
        if d <= 1e-12 * scale:
            return int(partition.tri_region[t])
    if best < 0:
        raise ValueError("no triangle of the requested phase in this element")
    return best
