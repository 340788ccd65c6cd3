"""Fill-reducing orderings for sparse direct solves on planar meshes."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = ["nested_dissection"]


def nested_dissection(A, xy, leaf=128):
    """Geometric nested dissection of the graph of ``A``.

    Unknowns are split at the coordinate median along the wider axis; the
    left-hand unknowns coupled to the right half form the separator, which is
    ordered after both halves.  Returns a permutation ``perm`` such that
    ``A[perm][:, perm]`` factors with little fill.
    """
    G = sp.csr_matrix(A, copy=True)
    G.data = np.ones_like(G.data)
    G = (G + G.T).tocsr()
    n = G.shape[0]
    xy = np.asarray(xy, float)
    marker = np.zeros(n)
    out = []
    stack = [(np.arange(n), False)]
    # iterative post-order: (idx, expanded)
    while stack:
        idx, done = stack.pop()
        if done:
            out.append(idx)
            continue
        if len(idx) <= leaf:
            out.append(idx)
            continue
        pts = xy[idx]
        ax = int(np.ptp(pts[:, 0]) < np.ptp(pts[:, 1]))
        med = np.median(pts[:, ax])
        left = pts[:, ax] < med
        if left.all() or not left.any():
            out.append(idx)
            continue
        marker[idx[~left]] = 1.0
        touch = (G[idx] @ marker) > 0
        marker[idx[~left]] = 0.0
        sep = left & touch
        # pushed in reverse: left half, right half, then separator
        stack.append((idx[sep], True))
        stack.append((idx[~left], False))
        stack.append((idx[left & ~sep], False))
    return np.concatenate(out) if out else np.zeros(0, np.int64)
