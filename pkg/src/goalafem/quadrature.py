"""Quadrature rules on the reference triangle and on intervals."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = ["triangle_rule", "gauss_interval", "graded_rule", "graded_breaks", "composite_rule"]


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed Gauss rule on ``conv{(0,0), (1,0), (0,1)}`` exact to ``degree``.

    Returns ``(points, weights)`` with weights summing to 1/2.
    """
    n = max(1, (degree + 2) // 2)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    u = 0.5 * (xj + 1.0)
    wu = 0.25 * wj
    v = 0.5 * (xl + 1.0)
    wv = 0.5 * wl
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.stack([uu.ravel(), ((1.0 - uu) * vv).ravel()], axis=1)
    wts = np.outer(wu, wv).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


@lru_cache(maxsize=None)
def gauss_interval(n):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = roots_legendre(n)
    t = 0.5 * (x + 1.0)
    w = 0.5 * w
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def graded_breaks(a, b, anchor, scale, ratio=0.5, floor=1e-12):
    """Break points on ``[a, b]`` shrinking geometrically toward ``anchor``.

    Pieces next to ``anchor`` shrink by ``ratio`` until their size drops
    below ``max(scale * ratio, floor * (b - a))``.
    """
    length = b - a
    if length <= 0:
        return np.array([a, b])
    anchor = min(max(anchor, a), b)
    stop = max(scale * ratio, floor * length)
    breaks = [a, b, anchor]
    for lo, hi, sign in ((a, anchor, -1.0), (anchor, b, 1.0)):
        d = hi - lo
        while d > stop:
            d *= ratio
            breaks.append(anchor + sign * d)
    return np.unique(np.clip(breaks, a, b))


def composite_rule(breaks, n=8):
    """Gauss rule with ``n`` points on every piece between consecutive ``breaks``."""
    breaks = np.unique(np.asarray(breaks, float))
    # merge break points that differ only by rounding; slivers would put nodes on a break
    tol = 1e-13 * (breaks[-1] - breaks[0])
    end = breaks[-1]
    breaks = breaks[np.concatenate([[True], np.diff(breaks) > tol])]
    breaks[-1] = end
    t, w = gauss_interval(n)
    lo = breaks[:-1]
    width = np.diff(breaks)
    x = (lo[:, None] + width[:, None] * t[None, :]).ravel()
    wx = (width[:, None] * w[None, :]).ravel()
    return x, wx


def graded_rule(a, b, anchor, scale, n=8, ratio=0.5, floor=1e-12):
    """Composite Gauss rule on ``[a, b]`` graded geometrically toward ``anchor``.

    Use ``scale`` = distance to a nearby singularity (0 when the singularity
    sits at ``anchor`` itself).
    """
    if b - a <= 0:
        return np.empty(0), np.empty(0)
    return composite_rule(graded_breaks(a, b, anchor, scale, ratio, floor), n)
