"""Generalized step enrichment: one DOF per spatially disconnected same-phase
region inside each nodal support, with unused levels removed.

Connectivity is computed on the sub-triangle graph of the node's element
patch: two triangles are adjacent iff they share a full edge and carry the
same phase, including edges on inter-element boundaries. Levels at a node
are ordered by the smallest triangle centroid of each component so that
rebuilding with identical inputs yields identical DOF ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def _union(parent, a, b):
    ra, rb = _find(parent, a), _find(parent, b)
    if ra != rb:
        parent[rb] = ra


def _edge_keys(tri):
    pts = [tuple(p) for p in tri]
    for a, b in ((0, 1), (1, 2), (2, 0)):
        yield (pts[a], pts[b]) if pts[a] <= pts[b] else (pts[b], pts[a])


@dataclass
class EnrichmentTable:
    total_dofs: int
    dof_node: np.ndarray    # (ndof,)
    dof_phase: np.ndarray   # (ndof,) in {1, 2}
    dof_level: np.ndarray   # (ndof,) 0-based within (node, phase)
    dof_touches_node: np.ndarray  # (ndof,) bool: region closure contains the node
    element_region_dofs: list = field(repr=False)  # per element: (n_regions, 4) int
    dof_supports: list = field(repr=False)  # per dof: [(element, region), ...]
    _node_phase_dofs: dict = field(repr=False, default_factory=dict)
    _region_phases: list = field(repr=False, default_factory=list)

    def dof_of(self, node: int, phase: int, level: int):
        """Global DOF id for (node, phase, level), or None if unused."""
        dofs = self._node_phase_dofs.get((node, phase))
        if dofs is None or level >= len(dofs):
            return None
        return dofs[level]

    def dofs_at(self, node: int, phase: int):
        return self._node_phase_dofs.get((node, phase), [])

    def _first_region(self, partition, phase: int):
        for r, p in enumerate(partition.region_phase):
            if p == phase:
                return r
        return None

    def level_of(self, element: int, node_local: int, phase: int, region=None):
        """Enrichment level interpolating `phase` in `element` at a local node.

        For the rare element containing two disconnected regions of the same
        phase, pass `region` to disambiguate; otherwise the first region of
        the phase is used.
        """
        erd = self.element_region_dofs[element]
        if region is None:
            regions = [r for r in range(erd.shape[0])
                       if self._region_phases[element][r] == phase]
            if not regions:
                return None
            region = regions[0]
        return int(self.dof_level[erd[region, node_local]])

    def active_dofs_for_element(self, element: int, phase: int, region=None):
        """The 4 global DOFs interpolating `phase` in an element, or None."""
        erd = self.element_region_dofs[element]
        if region is None:
            regions = [r for r in range(erd.shape[0])
                       if self._region_phases[element][r] == phase]
            if not regions:
                return None
            region = regions[0]
        return erd[region].copy()


def build_enrichment(mesh, partitions) -> EnrichmentTable:
    """Build the enrichment table from a mesh and its element partitions."""
    n_elem = mesh.n_elements

    # global triangle ids and the shared-edge map
    tri_elem, tri_phase, first_tri = [], [], []
    tri_vertices = []
    gid = 0
    region_first_tri = []  # per element: first triangle gid of each region
    for e in range(n_elem):
        part = partitions[e]
        first_tri.append(gid)
        firsts = np.full(part.n_regions, -1, dtype=np.int64)
        for t in range(len(part.tri_phase)):
            r = int(part.tri_region[t])
            if firsts[r] < 0:
                firsts[r] = gid
            tri_elem.append(e)
            tri_phase.append(int(part.tri_phase[t]))
            tri_vertices.append(part.tri_vertices[t])
            gid += 1
        region_first_tri.append(firsts)
    tri_elem = np.asarray(tri_elem)
    tri_phase = np.asarray(tri_phase)

    edge_map: dict = {}
    for t, tri in enumerate(tri_vertices):
        for key in _edge_keys(tri):
            edge_map.setdefault(key, []).append(t)

    # per-node components on the patch-restricted, same-phase triangle graph
    node_comp_dof: list[dict] = [dict() for _ in range(mesh.n_nodes)]
    dof_node, dof_phase, dof_level, dof_touch = [], [], [], []
    node_phase_dofs: dict = {}

    for i in range(mesh.n_nodes):
        patch = mesh.elements_of_node(i)
        tris = [t for e in patch
                for t in range(first_tri[e], first_tri[e] + len(partitions[e].tri_phase))]
        tri_set = set(tris)
        parent = {t: t for t in tris}
        for t in tris:
            for key in _edge_keys(tri_vertices[t]):
                for s in edge_map[key]:
                    if s != t and s in tri_set and tri_phase[s] == tri_phase[t]:
                        _union(parent, t, s)

        comps: dict = {}
        for t in tris:
            comps.setdefault(_find(parent, t), []).append(t)

        node_xy = tuple(mesh.node_coords[i])
        by_phase: dict = {1: [], 2: []}
        for root, members in comps.items():
            centroids = [tuple(tri_vertices[t].mean(axis=0)) for t in members]
            touches = any(tuple(v) == node_xy
                          for t in members for v in tri_vertices[t])
            by_phase[tri_phase[members[0]]].append((min(centroids), root, touches))
        for phase in (1, 2):
            entries = sorted(by_phase[phase])
            if not entries:
                continue
            ids = []
            for level, (_, root, touches) in enumerate(entries):
                d = len(dof_node)
                dof_node.append(i)
                dof_phase.append(phase)
                dof_level.append(level)
                dof_touch.append(touches)
                node_comp_dof[i][root] = d
                ids.append(d)
            node_phase_dofs[(i, phase)] = ids
        # remap every patch triangle to its component's dof for fast lookup
        for root, members in comps.items():
            d = node_comp_dof[i][root]
            for t in members:
                node_comp_dof[i][t] = d

    # element-side mapping: (element, region, local corner) -> dof
    element_region_dofs = []
    region_phases = []
    ndof = len(dof_node)
    dof_supports: list[list] = [[] for _ in range(ndof)]
    for e in range(n_elem):
        part = partitions[e]
        erd = np.empty((part.n_regions, 4), dtype=np.int64)
        for r in range(part.n_regions):
            t0 = int(region_first_tri[e][r])
            for a in range(4):
                node = int(mesh.element_nodes[e][a])
                d = node_comp_dof[node][t0]
                erd[r, a] = d
                dof_supports[d].append((e, r))
        element_region_dofs.append(erd)
        region_phases.append([int(p) for p in part.region_phase])

    return EnrichmentTable(
        total_dofs=ndof,
        dof_node=np.asarray(dof_node, dtype=np.int64),
        dof_phase=np.asarray(dof_phase, dtype=np.int8),
        dof_level=np.asarray(dof_level, dtype=np.int16),
        dof_touches_node=np.asarray(dof_touch, dtype=bool),
        element_region_dofs=element_region_dofs,
        dof_supports=dof_supports,
        _node_phase_dofs=node_phase_dofs,
        _region_phases=region_phases,
    )
