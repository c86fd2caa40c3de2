"""Structured triangulations of the unit square, red refinement and
nested subdomain/coarse/fine hierarchies.

Edges are stored once.  The *left* element of an edge is the adjacent
element with the lower index, the *right* one the higher index (``-1`` on
the boundary).  The stored unit normal always points out of the left
element, so on interior edges it points from the lower-indexed element to
the higher-indexed one and on boundary edges it is the outward normal.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BOUNDARY = -1


class ParameterError(ValueError):
    """Invalid construction parameter."""


class MeshError(ValueError):
    """A mesh violates one of the structural invariants."""


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _signed_area(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangulation with edge connectivity.

    Attributes
    ----------
    vertices : (NV, 2) float array
    triangles : (NT, 3) int array, counterclockwise
    edge_vertices : (NE, 2) int array, ordered counterclockwise w.r.t. the
        left element
    edge_elements : (NE, 2) int array, ``[left, right]`` with right = -1 on
        the boundary
    elem_edges : (NT, 3) int array, ``elem_edges[t, k]`` is the edge
        opposite local vertex ``k``
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edge_vertices: np.ndarray
    edge_elements: np.ndarray
    elem_edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float))
        for name in ("triangles", "edge_vertices", "edge_elements", "elem_edges"):
            object.__setattr__(self, name, _frozen(getattr(self, name), np.int64))

    @classmethod
    def from_triangles(cls, vertices, triangles):
        """Build the edge structure of a triangulation."""
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64)
        nt = len(triangles)
        # local edge k is opposite vertex k and runs (k+1) -> (k+2)
        a = triangles[:, [1, 2, 0]].ravel()
        b = triangles[:, [2, 0, 1]].ravel()
        key = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1)
        uniq, first, inverse = np.unique(key, axis=0, return_index=True,
                                         return_inverse=True)
        inverse = inverse.ravel()
        counts = np.bincount(inverse, minlength=len(uniq))
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        owner = np.repeat(np.arange(nt), 3)
        # local slots sorted by (edge, element): the first is the left element
        order = np.lexsort((owner, inverse))
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        left_slot = order[starts]
        edge_elements = np.full((len(uniq), 2), BOUNDARY, dtype=np.int64)
        edge_elements[:, 0] = owner[left_slot]
        interior = counts == 2
        edge_elements[interior, 1] = owner[order[starts[interior] + 1]]
        edge_vertices = np.stack([a[left_slot], b[left_slot]], axis=1)
        # renumber edges by first appearance so numbering follows element order
        perm = np.argsort(first, kind="stable")
        rank = np.empty_like(perm)
        rank[perm] = np.arange(len(perm))
        elem_edges = rank[inverse].reshape(nt, 3)
        return cls(vertices, triangles, edge_vertices[perm],
                   edge_elements[perm], elem_edges)

    # ------------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edge_vertices)

    @property
    def interior_edges(self):
        return np.flatnonzero(self.edge_elements[:, 1] != BOUNDARY)

    @property
    def boundary_edges(self):
        return np.flatnonzero(self.edge_elements[:, 1] == BOUNDARY)

    @property
    def is_boundary_edge(self):
        return self.edge_elements[:, 1] == BOUNDARY

    @property
    def areas(self):
        return _signed_area(self.vertices, self.triangles)

    @property
    def edge_tangents(self):
        v = self.vertices[self.edge_vertices]
        return v[:, 1] - v[:, 0]

    @property
    def edge_lengths(self):
        return np.hypot(*self.edge_tangents.T)

    @property
    def edge_midpoints(self):
        return self.vertices[self.edge_vertices].mean(axis=1)

    @property
    def normals(self):
        """Unit normals, outward from the left element."""
        t = self.edge_tangents
        return np.stack([t[:, 1], -t[:, 0]], axis=1) / self.edge_lengths[:, None]

    @property
    def diameters(self):
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p[:, [1, 2, 0]] - p[:, [2, 0, 1]], axis=2)
        return lengths.max(axis=1)

    @property
    def h(self):
        return float(self.diameters.max())

    @property
    def barycenters(self):
        return self.vertices[self.triangles].mean(axis=1)

    def min_angle(self):
        """Smallest interior angle over all triangles, in degrees."""
        p = self.vertices[self.triangles]
        angles = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            c = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1)
                                               * np.linalg.norm(v, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
        return float(np.min(angles))

    def validate(self):
        """Check the structural invariants; raise :class:`MeshError`."""
        nt, ne = self.n_elements, self.n_edges
        if np.any(self.triangles < 0) or np.any(self.triangles >= self.n_vertices):
            raise MeshError("triangle references a missing vertex")
        if np.any(self.areas <= 0):
            raise MeshError("triangle with non-positive signed area")
        left, right = self.edge_elements.T
        if np.any(left < 0) or np.any(left >= nt) or np.any(right >= nt):
            raise MeshError("edge references a missing element")
        interior = right != BOUNDARY
        if np.any(left[interior] >= right[interior]):
            raise MeshError("left element must have the lower index")
        n_int = int(interior.sum())
        if 3 * nt != 2 * n_int + (ne - n_int):
            raise MeshError("3 #T != 2 #E_int + #E_bnd")
        # every element lists each adjacent edge exactly once, opposite the
        # right vertex
        slots = np.zeros(ne, dtype=np.int64)
        np.add.at(slots, self.elem_edges.ravel(), 1)
        if np.any(slots != np.where(interior, 2, 1)):
            raise MeshError("element/edge adjacency is inconsistent")
        for k in range(3):
            e = self.elem_edges[:, k]
            tri = self.triangles
            ends = np.sort(tri[:, [(k + 1) % 3, (k + 2) % 3]], axis=1)
            if np.any(np.sort(self.edge_vertices[e], axis=1) != ends):
                raise MeshError("elem_edges does not match triangle vertices")
            t = np.arange(nt)
            if np.any((self.edge_elements[e, 0] != t) & (self.edge_elements[e, 1] != t)):
                raise MeshError("edge does not list its adjacent element")
        # normals point out of the left element
        c = self.barycenters[left]
        if np.any(np.einsum("ij,ij->i", self.edge_midpoints - c, self.normals) <= 0):
            raise MeshError("edge normal does not point out of the left element")
        return self


def build_unit_square_mesh(n):
    """Uniform ``n x n`` mesh of the unit square.

    Every cell square is cut along its ``(0,0)-(1,1)`` diagonal, giving
    ``2 n**2`` right triangles with ``h = sqrt(2)/n``.
    """
    if int(n) != n or n < 1:
        raise ParameterError(f"number of subdivisions must be >= 1, got {n!r}")
    n = int(n)
    x = np.arange(n + 1) / n
    X, Y = np.meshgrid(x, x)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return TriMesh.from_triangles(vertices, triangles)


def refine_uniform(mesh):
    """Red refinement: split every triangle into four by its edge midpoints.

    Children of element ``t`` are ``4t .. 4t+3``; the first three keep the
    corners of ``t`` and the last is the central (rotated) triangle.

    Returns
    -------
    fine : TriMesh
    parent : (4 NT,) int array
    """
    nv = mesh.n_vertices
    mids = nv + mesh.elem_edges  # midpoint vertex of the edge opposite k
    vertices = np.concatenate([mesh.vertices, mesh.edge_midpoints])
    a, b, c = mesh.triangles.T
    ma, mb, mc = mids.T  # opposite a, b, c
    children = np.stack([
        np.stack([a, mc, mb], axis=1),
        np.stack([mc, b, ma], axis=1),
        np.stack([mb, ma, c], axis=1),
        np.stack([ma, mb, mc], axis=1),
    ], axis=1).reshape(-1, 3)
    parent = np.repeat(np.arange(mesh.n_elements), 4)
    return TriMesh.from_triangles(vertices, children), parent


@dataclass(frozen=True, eq=False)
class MeshHierarchy:
    """Nested partitions ``T_S <= T_H <= T_h`` built by red refinement."""

    subdomain_mesh: TriMesh
    coarse_mesh: TriMesh
    fine_mesh: TriMesh
    coarse_refines: int
    fine_refines: int

    @property
    def n_subdomains(self):
        return self.subdomain_mesh.n_elements

    @property
    def H(self):
        return self.coarse_mesh.h

    @property
    def h(self):
        return self.fine_mesh.h

    @property
    def fine_to_coarse(self):
        return np.arange(self.fine_mesh.n_elements) // 4 ** self.fine_refines

    @property
    def coarse_to_subdomain(self):
        return np.arange(self.coarse_mesh.n_elements) // 4 ** self.coarse_refines

    @property
    def subdomain_of(self):
        """Element -> subdomain map on the fine mesh."""
        return self.coarse_to_subdomain[self.fine_to_coarse]


def build_hierarchy(n_sub, coarse_refines, fine_refines):
    """Subdomain mesh ``n_sub x n_sub``, refined to the coarse and fine level."""
    if int(n_sub) != n_sub or n_sub < 1:
        raise ParameterError(f"n_sub must be >= 1, got {n_sub!r}")
    if coarse_refines < 0 or fine_refines < 0:
        raise ParameterError("refinement counts must be >= 0")
    sub = build_unit_square_mesh(n_sub)
    coarse = sub
    for _ in range(coarse_refines):
        coarse, _ = refine_uniform(coarse)
    fine = coarse
    for _ in range(fine_refines):
        fine, _ = refine_uniform(fine)
    return MeshHierarchy(sub, coarse, fine, int(coarse_refines), int(fine_refines))


def locate_points(mesh, points, tol=1e-12):
    """Index of the triangle containing each point (brute force)."""
    p = mesh.vertices[mesh.triangles]
    out = np.full(len(points), -1, dtype=np.int64)
    area = mesh.areas
    for i, x in enumerate(np.asarray(points, dtype=float)):
        lam = []
        for k in range(3):
            q1, q2 = p[:, (k + 1) % 3], p[:, (k + 2) % 3]
            lam.append(0.5 * ((q1[:, 0] - x[0]) * (q2[:, 1] - x[1])
                              - (q1[:, 1] - x[1]) * (q2[:, 0] - x[0])) / area)
        inside = np.flatnonzero(np.min(lam, axis=0) >= -tol)
        if len(inside):
            out[i] = inside[0]
    return out


@dataclass(frozen=True, eq=False)
class SkeletonSets:
    """Per-subdomain edge sets of the fine mesh.

    ``interior[i]`` are fine edges with both neighbours in subdomain ``i``,
    ``boundary[i]`` the fine edges on the boundary of subdomain ``i`` (domain
    boundary plus skeleton), ``skeleton[i]`` the interior fine edges on the
    boundary of subdomain ``i``.
    """

    interior: tuple
    boundary: tuple
    skeleton: tuple
    gamma: np.ndarray


def edge_classification(hierarchy):
    mesh = hierarchy.fine_mesh
    sub = hierarchy.subdomain_of
    left, right = mesh.edge_elements.T
    s_left = sub[left]
    s_right = np.where(right == BOUNDARY, -1, sub[np.maximum(right, 0)])
    on_bnd = right == BOUNDARY
    cut = ~on_bnd & (s_left != s_right)
    interior, boundary, skeleton = [], [], []
    for i in range(hierarchy.n_subdomains):
        touches = (s_left == i) | (s_right == i)
        interior.append(np.flatnonzero(~on_bnd & (s_left == i) & (s_right == i)))
        skeleton.append(np.flatnonzero(cut & touches))
        boundary.append(np.flatnonzero((on_bnd & (s_left == i)) | (cut & touches)))
    return SkeletonSets(tuple(interior), tuple(boundary), tuple(skeleton),
                        np.flatnonzero(cut))


# ----------------------------------------------------------------------
# text format


def write_mesh(mesh, path):
    """Write the ``NV NT NE`` text format (0-based, right = -1 on boundary)."""
    lines = [f"{mesh.n_vertices} {mesh.n_elements} {mesh.n_edges}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += ["{} {} {}".format(*t) for t in mesh.triangles.tolist()]
    lines += ["{} {} {} {}".format(*ev, *ee) for ev, ee in
              zip(mesh.edge_vertices.tolist(), mesh.edge_elements.tolist())]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path):
    """Read the text format and validate every invariant."""
    with open(path, encoding="utf-8") as fh:
        rows = [ln.split() for ln in fh if ln.strip()]
    try:
        nv, nt, ne = (int(x) for x in rows[0])
        body = rows[1:]
        if len(body) != nv + nt + ne:
            raise MeshError("line count does not match header")
        vertices = np.array(body[:nv], dtype=float)
        triangles = np.array(body[nv:nv + nt], dtype=np.int64).reshape(nt, 3)
        edges = np.array(body[nv + nt:], dtype=np.int64).reshape(ne, 4)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"malformed mesh file: {exc}") from exc
    mesh = TriMesh.from_triangles(vertices, triangles).validate()
    # stored edge records must describe the same edges as the triangles
    got = {(min(a, b), max(a, b)): (a, b, l, r) for a, b, l, r in edges.tolist()}
    if len(got) != ne or ne != mesh.n_edges:
        raise MeshError("edge list does not match triangles")
    for (a, b), (l, r) in zip(mesh.edge_vertices.tolist(), mesh.edge_elements.tolist()):
        rec = got.get((min(a, b), max(a, b)))
        if rec is None or rec[2:] != (l, r) or rec[:2] != (a, b):
            raise MeshError(f"edge ({a}, {b}) has inconsistent adjacency or orientation")
    return mesh
