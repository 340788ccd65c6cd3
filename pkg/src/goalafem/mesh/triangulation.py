"""Conforming triangulations with newest vertex bisection.

Every triangle is stored as ``(v0, v1, v2)`` in counter-clockwise order with
its reference edge at local position 0, i.e. the edge ``(v0, v1)``; ``v2`` is
the newest vertex.  Bisection of ``(v0, v1, v2)`` at the midpoint ``m`` of the
reference edge yields the children ``(v2, v0, m)`` and ``(v1, v2, m)``.

Each element also carries the index of its root element in the initial mesh
and a bisection path (binary heap key with a leading 1 bit), so a mesh is the
set of leaves of a forest of binary trees.  That makes overlays and the
"refines" relation purely combinatorial.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

__all__ = [
    "MeshError",
    "Mesh2",
    "nvb_refine",
    "overlay",
    "element_size",
    "is_refinement",
]

_MAX_DEPTH = 62


class MeshError(ValueError):
    """Raised for invalid mesh input or invalid element indices."""


def _signed_area(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _longest_edge_refedge(vertices, triangles):
    """Local index of the longest edge; ties go to the lowest opposite vertex."""
    m = len(triangles)
    lengths = np.empty((m, 3))
    for k in range(3):
        a = vertices[triangles[:, k]]
        b = vertices[triangles[:, (k + 1) % 3]]
        lengths[:, k] = np.hypot(*(b - a).T)
    longest = lengths.max(axis=1, keepdims=True)
    # relative tolerance only to catch exact geometric ties (e.g. isosceles)
    candidate = lengths >= longest * (1.0 - 1e-12)
    opposite = triangles[:, [2, 0, 1]].astype(float)
    opposite[~candidate] = np.inf
    return np.argmin(opposite, axis=1)


class Mesh2:
    """Immutable conforming 2D triangulation.

    Parameters
    ----------
    vertices : (N, 2) array_like
    triangles : (M, 3) array_like of int
    refedge : (M,) array_like of int, optional
        Local index ``k`` of the reference edge ``(v_k, v_{k+1})``.  Defaults
        to the longest edge (ties broken by lowest opposite vertex index).
        Triangles are rotated on construction so the stored reference edge
        is always local edge 0.
    boundary_edges : (B, 2) array_like of int, optional
        Boundary edges; detected automatically if omitted.
    boundary_labels : (B,) array_like of int, optional
        Boundary segment label per boundary edge (default 0).
    """

    def __init__(
        self,
        vertices,
        triangles,
        refedge=None,
        boundary_edges=None,
        boundary_labels=None,
        *,
        generation=None,
        root=None,
        path=None,
        forest=None,
        _validate=True,
    ):
        vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        m = len(triangles)
        if _validate:
            if m == 0:
                raise MeshError("mesh needs at least one triangle")
            if triangles.min() < 0 or triangles.max() >= len(vertices):
                raise MeshError("triangle references a missing vertex")
            if refedge is None:
                refedge = _longest_edge_refedge(vertices, triangles)
            refedge = np.asarray(refedge, dtype=np.int64).reshape(m)
            if np.any((refedge < 0) | (refedge > 2)):
                raise MeshError("reference edge index must be in {0, 1, 2}")
            rows = np.arange(m)[:, None]
            triangles = triangles[rows, (refedge[:, None] + np.arange(3)) % 3]
            area = _signed_area(vertices, triangles)
            if np.any(area == 0.0):
                raise MeshError("degenerate triangle")
            flip = area < 0
            triangles[flip] = triangles[flip][:, [1, 0, 2]]
        self._vertices = vertices
        self._triangles = triangles
        self._vertices.setflags(write=False)
        self._triangles.setflags(write=False)

        if generation is None:
            generation = np.zeros(m, dtype=np.int64)
        if root is None:
            root = np.arange(m, dtype=np.int64)
        if path is None:
            path = np.ones(m, dtype=np.int64)
        self._generation = np.asarray(generation, dtype=np.int64)
        self._root = np.asarray(root, dtype=np.int64)
        self._path = np.asarray(path, dtype=np.int64)
        for arr in (self._generation, self._root, self._path):
            arr.setflags(write=False)
        self._forest = self if forest is None else forest

        if boundary_edges is None:
            boundary_edges = self._detect_boundary()
            if boundary_labels is None:
                boundary_labels = np.zeros(len(boundary_edges), dtype=np.int64)
        boundary_edges = np.asarray(boundary_edges, dtype=np.int64).reshape(-1, 2)
        if boundary_labels is None:
            boundary_labels = np.zeros(len(boundary_edges), dtype=np.int64)
        self._boundary_edges = boundary_edges
        self._boundary_labels = np.asarray(boundary_labels, dtype=np.int64)
        self._boundary_edges.setflags(write=False)
        self._boundary_labels.setflags(write=False)
        if _validate:
            self._check_boundary_table()

    # ------------------------------------------------------------------
    # basic accessors

    @property
    def vertices(self):
        return self._vertices

    @property
    def triangles(self):
        return self._triangles

    @property
    def generation(self):
        return self._generation

    @property
    def root(self):
        """Index of the root element (in the initial mesh) of every triangle."""
        return self._root

    @property
    def path(self):
        """Bisection-tree key of every triangle (1 for a root)."""
        return self._path

    @property
    def forest(self):
        """The initial mesh this mesh descends from."""
        return self._forest

    @property
    def refedge(self):
        # stored triangles are normalized, so the reference edge is local 0
        return np.zeros(len(self._triangles), dtype=np.int64)

    @property
    def boundary_edges(self):
        return self._boundary_edges

    @property
    def boundary_labels(self):
        return self._boundary_labels

    @property
    def n_vertices(self):
        return len(self._vertices)

    @property
    def n_elements(self):
        return len(self._triangles)

    def __len__(self):
        return len(self._triangles)

    def __repr__(self):
        return f"Mesh2(vertices={self.n_vertices}, triangles={self.n_elements})"

    # ------------------------------------------------------------------
    # derived geometry, cached per instance

    @cached_property
    def areas(self):
        return _signed_area(self._vertices, self._triangles)

    @cached_property
    def h(self):
        """Element size ``|T|^(1/2)``."""
        return np.sqrt(self.areas)

    @cached_property
    def _edge_data(self):
        t = self._triangles
        m = len(t)
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        base = np.int64(self.n_vertices + 1)
        codes, inverse = np.unique(flat[:, 0] * base + flat[:, 1], return_inverse=True)
        edges = np.stack([codes // base, codes % base], axis=1)
        inverse = inverse.reshape(m, 3)
        ne = len(edges)
        e2t = np.full((ne, 2), -1, dtype=np.int64)
        e2l = np.full((ne, 2), -1, dtype=np.int64)
        owner = np.repeat(np.arange(m), 3)
        lidx = np.tile(np.arange(3), m)
        eflat = inverse.ravel()
        order = np.argsort(eflat, kind="stable")
        eflat_s = eflat[order]
        first = np.ones(len(eflat_s), dtype=bool)
        first[1:] = eflat_s[1:] != eflat_s[:-1]
        slot = np.where(first, 0, 1)
        if np.any(~first[1:] & ~first[:-1]):
            raise MeshError("edge shared by more than two triangles")
        e2t[eflat_s, slot] = owner[order]
        e2l[eflat_s, slot] = lidx[order]
        return edges, inverse, e2t, e2l

    @property
    def edges(self):
        """Unique edges ``(E, 2)`` with sorted vertex indices."""
        return self._edge_data[0]

    @property
    def element_edges(self):
        """Edge index of local edge ``k = (v_k, v_{k+1})`` for every triangle."""
        return self._edge_data[1]

    @property
    def edge_elements(self):
        """The (up to) two triangles sharing each edge; ``-1`` on the boundary."""
        return self._edge_data[2]

    @property
    def edge_local_index(self):
        return self._edge_data[3]

    @cached_property
    def boundary_edge_ids(self):
        """Edge index of every row of :attr:`boundary_edges`."""
        key = np.sort(self._boundary_edges, axis=1)
        edges = self.edges
        code_e = edges[:, 0] * (self.n_vertices + 1) + edges[:, 1]
        code_b = key[:, 0] * (self.n_vertices + 1) + key[:, 1]
        pos = np.searchsorted(code_e, code_b)
        if len(code_b) and (np.any(pos >= len(code_e)) or np.any(code_e[pos] != code_b)):
            raise MeshError("boundary edge is not an edge of the mesh")
        return pos

    def _detect_boundary(self):
        edges, inverse, e2t, _ = self._edge_data
        bnd = np.flatnonzero(e2t[:, 1] < 0)
        # orient boundary edges as they appear in their triangle
        out = np.empty((len(bnd), 2), dtype=np.int64)
        t = self._triangles
        for n, e in enumerate(bnd):
            el = e2t[e, 0]
            k = int(np.flatnonzero(inverse[el] == e)[0])
            out[n] = (t[el, k], t[el, (k + 1) % 3])
        return out

    def _check_boundary_table(self):
        e2t = self.edge_elements
        ids = self.boundary_edge_ids
        if np.any(e2t[ids, 1] >= 0):
            raise MeshError("boundary table lists an interior edge")
        if len(np.unique(ids)) != len(ids) or len(ids) != np.count_nonzero(e2t[:, 1] < 0):
            raise MeshError("boundary table does not cover the boundary exactly once")

    # ------------------------------------------------------------------

    def is_conforming(self):
        """Edge-incidence audit.

        Every interior edge must be shared by exactly two triangles traversing
        it in opposite directions, and the edges with a single triangle must be
        exactly the boundary table.  A hanging node shows up as single-incidence
        edges that are not boundary edges.
        """
        try:
            edges, inverse, e2t, e2l = self._edge_data
        except MeshError:
            return False
        if np.any(self.areas <= 0):
            return False
        single = np.flatnonzero(e2t[:, 1] < 0)
        try:
            ids = np.sort(self.boundary_edge_ids)
        except MeshError:
            return False
        if len(ids) != len(single) or np.any(ids != single):
            return False
        interior = e2t[:, 1] >= 0
        t = self._triangles
        a = t[e2t[interior, 0], e2l[interior, 0]]
        b = t[e2t[interior, 1], (e2l[interior, 1] + 1) % 3]
        return bool(np.all(a == b))

    def keys(self):
        """Set of ``(root, path)`` pairs identifying the leaves."""
        return set(zip(self._root.tolist(), self._path.tolist()))

    def dump(self, fh):
        """Write the plain-text snapshot format."""
        fh.write(f"vertices {self.n_vertices} triangles {self.n_elements}\n")
        for x, y in self._vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for (a, b, c), g in zip(self._triangles, self._generation):
            fh.write(f"{a} {b} {c} 0 {g}\n")

    @classmethod
    def load(cls, fh):
        """Read the snapshot format; the result is a fresh root mesh."""
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "vertices" or header[2] != "triangles":
            raise MeshError("bad mesh dump header")
        n, m = int(header[1]), int(header[3])
        verts = np.array([fh.readline().split() for _ in range(n)], dtype=float)
        rows = np.array([fh.readline().split() for _ in range(m)], dtype=np.int64)
        mesh = cls(verts, rows[:, :3], refedge=rows[:, 3])
        return mesh


def element_size(mesh, element):
    """``h_T = |T|^(1/2)`` for a triangle, the panel length for a boundary mesh."""
    return float(mesh.h[element])


def _check_marked(mesh, marked):
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    if marked.size and (marked[0] < 0 or marked[-1] >= mesh.n_elements):
        raise MeshError("marked element index out of range")
    return marked


def nvb_refine(mesh, marked):
    """Coarsest conforming NVB refinement in which every marked triangle is bisected.

    Marked triangles are bisected once at their reference edge; the closure
    marks reference edges of neighbours until no hanging node remains.
    """
    marked = _check_marked(mesh, marked)
    if marked.size == 0:
        return mesh
    verts = mesh.vertices
    tri = mesh.triangles
    e2e = mesh.element_edges
    ne = len(mesh.edges)

    flag = np.zeros(ne, dtype=bool)
    flag[e2e[marked, 0]] = True
    while True:
        need = flag[e2e].any(axis=1) & ~flag[e2e[:, 0]]
        if not need.any():
            break
        flag[e2e[need, 0]] = True

    n0 = mesh.n_vertices
    flagged = np.flatnonzero(flag)
    newid = np.full(ne, -1, dtype=np.int64)
    newid[flagged] = n0 + np.arange(len(flagged))
    edges = mesh.edges
    mid = 0.5 * (verts[edges[flagged, 0]] + verts[edges[flagged, 1]])
    new_vertices = np.vstack([verts, mid])

    f1 = flag[e2e[:, 1]]
    f2 = flag[e2e[:, 2]]
    f0 = flag[e2e[:, 0]]
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    m0 = newid[e2e[:, 0]]
    m1 = newid[e2e[:, 1]]
    m2 = newid[e2e[:, 2]]
    gen = mesh.generation
    root = mesh.root
    path = mesh.path
    if np.any(gen[f0] + (f1 | f2)[f0] + 1 > _MAX_DEPTH):
        raise MeshError("bisection depth exceeds the supported maximum")

    # children: (parent, order, triangle, generation, path)
    pieces = []

    def add(sel, order, tris, dgen, pbits):
        idx = np.flatnonzero(sel)
        if idx.size == 0:
            return
        pieces.append((idx, np.full(idx.size, order), np.stack([t[idx] for t in tris], axis=1),
                       gen[idx] + dgen, (path[idx] << dgen) | pbits))

    keep = ~f0
    add(keep, 0, (v0, v1, v2), 0, 0)
    only0 = f0 & ~f1 & ~f2
    add(only0, 0, (v2, v0, m0), 1, 0b0)
    add(only0, 1, (v1, v2, m0), 1, 0b1)
    b1 = f0 & f1 & ~f2
    add(b1, 0, (v2, v0, m0), 1, 0b0)
    add(b1, 1, (m0, v1, m1), 2, 0b10)
    add(b1, 2, (v2, m0, m1), 2, 0b11)
    b2 = f0 & ~f1 & f2
    add(b2, 0, (m0, v2, m2), 2, 0b00)
    add(b2, 1, (v0, m0, m2), 2, 0b01)
    add(b2, 2, (v1, v2, m0), 1, 0b1)
    b3 = f0 & f1 & f2
    add(b3, 0, (m0, v2, m2), 2, 0b00)
    add(b3, 1, (v0, m0, m2), 2, 0b01)
    add(b3, 2, (m0, v1, m1), 2, 0b10)
    add(b3, 3, (v2, m0, m1), 2, 0b11)

    parent = np.concatenate([p[0] for p in pieces])
    order = np.concatenate([p[1] for p in pieces])
    sort = np.lexsort((order, parent))
    new_tri = np.concatenate([p[2] for p in pieces])[sort]
    new_gen = np.concatenate([p[3] for p in pieces])[sort]
    new_path = np.concatenate([p[4] for p in pieces])[sort]
    new_root = root[parent[sort]]

    # boundary edges: split the flagged ones, keeping orientation and label
    bnd = mesh.boundary_edges
    lab = mesh.boundary_labels
    bid = mesh.boundary_edge_ids
    bmid = newid[bid]
    split = bmid >= 0
    b_first = np.where(split[:, None], np.stack([bnd[:, 0], bmid], axis=1), bnd)
    b_second = np.stack([bmid, bnd[:, 1]], axis=1)[split]
    bparent = np.concatenate([np.arange(len(bnd)), np.flatnonzero(split)])
    border = np.concatenate([np.zeros(len(bnd), dtype=np.int64), np.ones(split.sum(), dtype=np.int64)])
    bsort = np.lexsort((border, bparent))
    new_bnd = np.vstack([b_first, b_second])[bsort]
    new_lab = np.concatenate([lab, lab[split]])[bsort]

    return Mesh2(
        new_vertices,
        new_tri,
        boundary_edges=new_bnd,
        boundary_labels=new_lab,
        generation=new_gen,
        root=new_root,
        path=new_path,
        forest=mesh.forest,
        _validate=False,
    )


def _same_forest(a, b):
    if a.forest is b.forest:
        return True
    fa, fb = a.forest, b.forest
    return (
        fa.n_elements == fb.n_elements
        and np.array_equal(fa.triangles, fb.triangles)
        and np.array_equal(fa.vertices, fb.vertices)
    )


def _strict_ancestors(mesh):
    anc = set()
    for r, p in zip(mesh.root.tolist(), mesh.path.tolist()):
        p >>= 1
        while p >= 1:
            key = (r, p)
            if key in anc:
                break
            anc.add(key)
            p >>= 1
    return anc


def is_refinement(fine, coarse):
    """True if every leaf of ``fine`` descends from (or equals) a leaf of ``coarse``."""
    if not _same_forest(fine, coarse):
        return False
    leaves = coarse.keys()
    for r, p in zip(fine.root.tolist(), fine.path.tolist()):
        while p >= 1 and (r, p) not in leaves:
            p >>= 1
        if p < 1:
            return False
    return True


def overlay(a, b):
    """Coarsest common refinement of two meshes from the same initial mesh."""
    if not _same_forest(a, b):
        raise MeshError("overlay requires meshes refined from the same initial mesh")
    if b.n_elements > a.n_elements:
        a, b = b, a
    target = _strict_ancestors(b)
    current = a
    while True:
        sel = [i for i, key in enumerate(zip(current.root.tolist(), current.path.tolist()))
               if key in target]
        if not sel:
            return current
        current = nvb_refine(current, np.array(sel, dtype=np.int64))
