"""Panel meshes of closed polygonal curves with ratio-controlled bisection."""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .triangulation import MeshError

__all__ = ["BoundaryMesh", "bisect_1d"]


class BoundaryMesh:
    """Ordered panel mesh of a closed polygon.

    Panel ``i`` runs from ``nodes[i]`` to ``nodes[(i + 1) % n]``.  Nodes must be
    ordered counter-clockwise so that :attr:`normals` point outward.

    ``generation`` counts bisections relative to the initial mesh; ``root`` is
    the index of the initial panel each panel descends from.
    """

    def __init__(self, nodes, *, generation=None, root=None, path=None, forest=None):
        nodes = np.array(nodes, dtype=float).reshape(-1, 2)
        if len(nodes) < 3:
            raise MeshError("a closed boundary mesh needs at least three nodes")
        n = len(nodes)
        self._nodes = nodes
        self._nodes.setflags(write=False)
        self._generation = np.zeros(n, np.int64) if generation is None else np.asarray(generation, np.int64)
        self._root = np.arange(n, dtype=np.int64) if root is None else np.asarray(root, np.int64)
        self._path = np.ones(n, dtype=np.int64) if path is None else np.asarray(path, np.int64)
        self._forest = self if forest is None else forest
        if np.any(self.h <= 0):
            raise MeshError("panel of zero length")

    @property
    def nodes(self):
        return self._nodes

    @property
    def generation(self):
        return self._generation

    @property
    def root(self):
        return self._root

    @property
    def path(self):
        return self._path

    @property
    def forest(self):
        return self._forest

    @property
    def n_elements(self):
        return len(self._nodes)

    def __len__(self):
        return len(self._nodes)

    def __repr__(self):
        return f"BoundaryMesh(panels={self.n_elements})"

    @cached_property
    def panels(self):
        n = len(self._nodes)
        idx = np.arange(n)
        return np.stack([idx, (idx + 1) % n], axis=1)

    @cached_property
    def start(self):
        return self._nodes

    @cached_property
    def end(self):
        return np.roll(self._nodes, -1, axis=0)

    @cached_property
    def h(self):
        """Panel lengths."""
        d = self.end - self.start
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def tangents(self):
        return (self.end - self.start) / self.h[:, None]

    @cached_property
    def normals(self):
        t = self.tangents
        return np.stack([t[:, 1], -t[:, 0]], axis=1)

    @cached_property
    def midpoints(self):
        return 0.5 * (self.start + self.end)

    @cached_property
    def arclength(self):
        """Arclength of every node measured from node 0."""
        return np.concatenate([[0.0], np.cumsum(self.h)[:-1]])

    def max_ratio(self):
        """Largest length ratio between neighbouring panels."""
        h = self.h
        hn = np.roll(h, -1)
        return float(np.max(np.maximum(h / hn, hn / h)))

    def keys(self):
        return set(zip(self._root.tolist(), self._path.tolist()))

    def dump(self, fh):
        """Write the plain-text snapshot format: header ``panels N``, then ``x y generation``."""
        fh.write(f"panels {self.n_elements}\n")
        for (x, y), g in zip(self._nodes, self._generation):
            fh.write(f"{x:.17g} {y:.17g} {g}\n")

    @classmethod
    def load(cls, fh):
        """Read the snapshot format; generations are kept, the refinement tree is not."""
        header = fh.readline().split()
        if len(header) != 2 or header[0] != "panels":
            raise MeshError("bad boundary mesh dump header")
        rows = np.array([fh.readline().split() for _ in range(int(header[1]))], dtype=float)
        return cls(rows[:, :2], generation=rows[:, 2].astype(np.int64))


def bisect_1d(mesh, marked):
    """Halve marked panels; neighbours are bisected until generations differ by ≤ 1.

    With an initial mesh of equal panel lengths this keeps the ratio of
    neighbouring panel lengths at most 2.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    n = mesh.n_elements
    if marked.size and (marked[0] < 0 or marked[-1] >= n):
        raise MeshError("marked panel index out of range")
    if marked.size == 0:
        return mesh
    flag = np.zeros(n, dtype=bool)
    flag[marked] = True
    gen = mesh.generation
    while True:
        new_gen = gen + flag
        need = np.zeros(n, dtype=bool)
        for shift in (1, -1):
            nb = np.roll(new_gen, shift)
            # neighbour at position i - shift is too coarse relative to i
            too_coarse = (new_gen - nb) > 1
            need |= np.roll(too_coarse, -shift)
        need &= ~flag
        if not need.any():
            break
        flag |= need

    start = mesh.start
    mid = 0.5 * (mesh.start + mesh.end)
    count = 1 + flag
    owner = np.repeat(np.arange(n), count)
    second = np.zeros(len(owner), dtype=bool)
    second[1:] = owner[1:] == owner[:-1]
    nodes = np.where(second[:, None], mid[owner], start[owner])
    generation = gen[owner] + flag[owner]
    path = np.where(flag[owner], (mesh.path[owner] << 1) | second, mesh.path[owner])
    return BoundaryMesh(nodes, generation=generation, root=mesh.root[owner], path=path,
                        forest=mesh.forest)
