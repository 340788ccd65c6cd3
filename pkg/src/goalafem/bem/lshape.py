"""L-shaped benchmark for the weakly-singular integral equation.

The domain is the square ``(-1/4, 1/4)^2`` minus one quadrant, rotated so the
reentrant corner sits at the origin and the domain occupies the polar
angles ``(-3π/4, 3π/4)``.  Its diameter is ``1/√2``.  The Dirichlet datum is
``φ = r^{2/3} cos(2α/3)``; it vanishes on both edges at the reentrant corner,
and the exact Neumann datum ``u = ∂_n P`` blows up like ``r^{-1/3}`` there.

Arclength ``s ∈ [0, 2)`` starts at the convex corner on the positive
x-axis and runs counter-clockwise; the reentrant corner is at ``s = 1``.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputError
from ..mesh import BoundaryMesh
from ..quadrature import gauss_interval

__all__ = [
    "CORNERS",
    "PERIMETER",
    "REENTRANT",
    "lshape_mesh",
    "point_at",
    "phi",
    "grad_p",
    "lshape_exact",
    "exact_on_edge",
    "edge_of",
    "integrate_on_arc",
]

_ROT = 5 * np.pi / 4
_C, _S = np.cos(_ROT), np.sin(_ROT)
# corners listed counter-clockwise from s = 0, before rotation
_RAW = np.array([[-0.25, 0.25], [-0.25, -0.25], [0.0, -0.25], [0.0, 0.0], [0.25, 0.0], [0.25, 0.25]])
CORNERS = _RAW @ np.array([[_C, _S], [-_S, _C]])
CORNERS[np.abs(CORNERS) < 1e-15] = 0.0
CORNER_S = np.array([0.0, 0.5, 0.75, 1.0, 1.25, 1.5])
PERIMETER = 2.0
REENTRANT = 3  # index of the corner at the origin


def point_at(s):
    """Boundary point at arclength ``s`` (vectorised, periodic)."""
    s = np.mod(np.asarray(s, float), PERIMETER)
    k = np.searchsorted(CORNER_S, s, side="right") - 1
    a = CORNERS[k]
    b = CORNERS[(k + 1) % 6]
    s0 = CORNER_S[k]
    s1 = np.where(k + 1 < 6, CORNER_S[(k + 1) % 6], PERIMETER)
    lam = (s - s0) / (s1 - s0)
    return a + lam[..., None] * (b - a)


def lshape_mesh(n_per_quarter=1):
    """Uniform initial mesh with panels of length ``1/(4 n)``; all corners are nodes."""
    n = 8 * int(n_per_quarter)
    return BoundaryMesh(point_at(np.arange(n) * PERIMETER / n))


def _polar(x):
    x = np.asarray(x, float)
    r = np.hypot(x[..., 0], x[..., 1])
    a = np.arctan2(x[..., 1], x[..., 0])
    return r, a


def phi(x):
    """``r^{2/3} cos(2α/3)`` with ``α ∈ (-π, π]``; the branch cut lies outside the domain."""
    r, a = _polar(x)
    return r ** (2 / 3) * np.cos(2 * a / 3)


def grad_p(x):
    """Gradient of the harmonic extension ``P = r^{2/3} cos(2α/3)``."""
    r, a = _polar(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        dr = (2 / 3) * r ** (-1 / 3) * np.cos(2 * a / 3)
        da = -(2 / 3) * r ** (-1 / 3) * np.sin(2 * a / 3)  # (1/r) ∂_α P
    ca, sa = np.cos(a), np.sin(a)
    return np.stack([dr * ca - da * sa, dr * sa + da * ca], axis=-1)


def edge_of(x, tol=1e-12):
    """Index of the polygon edge containing ``x``; corners raise :class:`InputError`."""
    x = np.atleast_2d(np.asarray(x, float))
    out = np.full(len(x), -1)
    for k in range(6):
        a, b = CORNERS[k], CORNERS[(k + 1) % 6]
        d = b - a
        L = np.hypot(*d)
        rel = x - a
        lam = rel @ d / L**2
        off = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / L
        on = (off < tol) & (lam > tol) & (lam < 1 - tol)
        out[on] = k
    if np.any(out < 0):
        raise InputError("point is a corner of the L-shape or not on its boundary")
    return out


def _outward_normal(k):
    a, b = CORNERS[k], CORNERS[(k + 1) % 6]
    d = (b - a) / np.hypot(*(b - a))
    return np.array([d[1], -d[0]])


def lshape_exact(x):
    """Exact solution ``u = ∂_n P`` at boundary points away from the corners."""
    x = np.atleast_2d(np.asarray(x, float))
    k = edge_of(x)
    normals = np.stack([_outward_normal(j) for j in range(6)])[k]
    return np.einsum("ia,ia->i", grad_p(x), normals)


def exact_on_edge(k, lam):
    """``u`` on edge ``k`` at relative positions ``lam ∈ (0, 1)``, without the corner check."""
    a, b = CORNERS[k], CORNERS[(k + 1) % 6]
    x = a + np.asarray(lam, float)[..., None] * (b - a)
    return grad_p(x) @ _outward_normal(k)


def integrate_on_arc(f, s0, s1, n=20):
    """``∫_{s0}^{s1} f(s) ds`` by Gauss rules on the corner-free pieces of the arc.

    Pieces touching the reentrant corner are graded toward it.
    """
    from ..quadrature import graded_rule

    breaks = np.unique(np.concatenate([[s0, s1], CORNER_S[(CORNER_S > s0) & (CORNER_S < s1)]]))
    t, w = gauss_interval(n)
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        sing = [c for c in (CORNER_S[REENTRANT],) if abs(c - lo) < 1e-14 or abs(c - hi) < 1e-14]
        if sing:
            x, wx = graded_rule(lo, hi, sing[0], 0.0, n=n, ratio=0.15, floor=1e-12)
        else:
            x, wx = lo + (hi - lo) * t, (hi - lo) * w
        total += float(np.sum(wx * f(x)))
    return total
