"""Weighted-residual indicators for the weakly-singular integral equation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError
from ..estimators import EstimatorField
from ..quadrature import composite_rule, gauss_interval, graded_breaks
from .operators import _INV2PI, FAR, _panel_keys, edge_far_rule, segment_distance, slp_derivative_matrix

__all__ = [
    "panel_targets",
    "eta_bem",
    "BlockCache",
    "cached_derivative_matrix",
    "density_derivative",
]

TARGETS = 3


def panel_targets(mesh, q=TARGETS):
    """Gauss points on every panel: ``(points (n, q, 2), weights (q,))``; never endpoints."""
    t, w = gauss_interval(q)
    pts = mesh.start[:, None, :] + t[None, :, None] * (mesh.end - mesh.start)[:, None, :]
    return pts, w


def eta_bem(mesh, U, data_derivative, epsilon=0.0, dual=False, D=None, q=TARGETS):
    """``η(T)² = h_T^{1∓ε} ‖∂_s(V U - F)‖²_{L²(T)}``.

    ``data_derivative`` holds ``∂_s F`` at the :func:`panel_targets` points,
    shape ``(n, q)``.  ``dual`` selects the exponent ``1 + ε``; with ``ε = 0``
    both directions give the unscaled indicators.  ``D`` is the matrix from
    :func:`slp_derivative_matrix` at the same targets (computed if omitted).
    """
    if epsilon < 0:
        raise InputError("epsilon must be nonnegative")
    U = np.asarray(U, float)
    n = mesh.n_elements
    if U.shape != (n,):
        raise InputError("one coefficient per panel expected")
    pts, w = panel_targets(mesh, q)
    dF = np.asarray(data_derivative, float).reshape(n, q)
    if D is None:
        tang = np.repeat(mesh.tangents, q, axis=0)
        D = slp_derivative_matrix(pts.reshape(-1, 2), tang, mesh)
    res = (D @ U).reshape(n, q) - dF
    h = mesh.h
    expo = 1.0 + epsilon if dual else 1.0 - epsilon
    return EstimatorField(mesh, h**expo * h * (res**2 @ w))


@dataclass
class BlockCache:
    """Rows and columns of a panel-indexed matrix kept across refinement levels."""

    rows: dict = field(default_factory=dict)
    cols: dict = field(default_factory=dict)
    matrix: np.ndarray | None = None


def _expand(idx, m):
    return (np.asarray(idx)[:, None] * m + np.arange(m)[None, :]).ravel()


def cached_matrix(cache, keys, compute, m=1):
    """Matrix with ``m`` rows and one column per panel, reusing entries for known panels.

    ``compute(row_panels, col_panels)`` returns the block for the given panel
    index arrays.
    """
    n = len(keys)
    M = np.empty((n * m, n))
    if cache.matrix is None:
        M[:] = compute(np.arange(n), np.arange(n))
    else:
        old_r = np.array([cache.rows.get(k, -1) for k in keys])
        old_c = np.array([cache.cols.get(k, -1) for k in keys])
        kr, nr = np.flatnonzero(old_r >= 0), np.flatnonzero(old_r < 0)
        kc, nc = np.flatnonzero(old_c >= 0), np.flatnonzero(old_c < 0)
        if kr.size and kc.size:
            M[np.ix_(_expand(kr, m), kc)] = cache.matrix[np.ix_(_expand(old_r[kr], m), old_c[kc])]
        if nr.size:
            M[_expand(nr, m), :] = compute(nr, np.arange(n))
        if kr.size and nc.size:
            M[np.ix_(_expand(kr, m), nc)] = compute(kr, nc)
    cache.rows = {k: i for i, k in enumerate(keys)}
    cache.cols = dict(cache.rows)
    cache.matrix = M
    return M


def cached_derivative_matrix(mesh, cache=None, q=TARGETS):
    """:func:`slp_derivative_matrix` at the panel targets, optionally reusing a cache."""
    pts, _ = panel_targets(mesh, q)
    tang = mesh.tangents

    def compute(rows, cols):
        x = pts[rows].reshape(-1, 2)
        tx = np.repeat(tang[rows], q, axis=0)
        return -_INV2PI * _derivative_block(x, tx, mesh.start[cols], mesh.end[cols])

    if cache is None:
        return compute(np.arange(mesh.n_elements), np.arange(mesh.n_elements))
    return cached_matrix(cache, _panel_keys(mesh), compute, q)


def _derivative_block(x, tx, a, b, chunk=2_000_000):
    from .operators import log_potential_derivative

    out = np.empty((len(x), len(a)))
    step = max(1, chunk // max(len(a), 1))
    for s in range(0, len(x), step):
        out[s:s + step] = log_potential_derivative(x[s:s + step, None, :], tx[s:s + step, None, :],
                                                   a[None], b[None])
    return out


def density_derivative(x, edge, corners, density, singular_corners=(), n=10):
    """``∂_t ∫_Γ G(x, y) u(y) ds_y`` for targets ``x`` on polygon edges ``edge``.

    ``density(k, lam)`` evaluates ``u`` on edge ``k`` at relative positions
    ``lam``.  On the edge containing ``x`` the Cauchy principal value is
    taken after subtracting ``u(x)``.  Targets far from an edge share one
    rule; the rest are graded toward the target and toward corners in
    ``singular_corners`` where ``u`` is singular.
    """
    x = np.atleast_2d(np.asarray(x, float))
    edge = np.asarray(edge)
    corners = np.asarray(corners, float)
    m = len(corners)
    out = np.zeros(len(x))
    tx = corners[(edge + 1) % m] - corners[edge]
    tx /= np.hypot(tx[:, 0], tx[:, 1])[:, None]
    for k in range(m):
        a, b = corners[k], corners[(k + 1) % m]
        e = b - a
        L = np.hypot(*e)
        sing = [0.0 if k == c else 1.0 for c in singular_corners if c in (k, (k + 1) % m)]
        dist, lam = segment_distance(x, a, b)
        own = edge == k
        far = ~own & (dist >= L / FAR)
        if far.any():
            s, ws = edge_far_rule(sing, FAR, n)
            y = a[None, :] + s[:, None] * e[None, :]
            r = x[far, None, :] - y[None]
            kern = -_INV2PI * np.einsum("tqa,ta->tq", r, tx[far]) / np.einsum("tqa,tqa->tq", r, r)
            out[far] += kern @ (ws * L * density(k, s))
        for i in np.flatnonzero(own):
            li = lam[i]
            gap = min([abs(li - c) for c in sing] + [1.0])
            br = [graded_breaks(0.0, 1.0, li, gap, ratio=0.25, floor=1e-12)]
            br += [graded_breaks(0.0, 1.0, c, 0.0, ratio=0.25, floor=1e-12) for c in sing]
            s, ws = composite_rule(np.concatenate(br), n)
            ux = density(k, np.array([li]))[0]
            smooth = (ws * L) @ ((density(k, s) - ux) / ((s - li) * L))
            out[i] += _INV2PI * (smooth + ux * np.log((1 - li) / li))
        for i in np.flatnonzero(~own & ~far):
            br = [graded_breaks(0.0, 1.0, lam[i], dist[i] / L, ratio=0.25, floor=1e-12)]
            br += [graded_breaks(0.0, 1.0, c, 0.0, ratio=0.25, floor=1e-12) for c in sing]
            s, ws = composite_rule(np.concatenate(br), n)
            r = x[i][None, :] - (a[None, :] + s[:, None] * e[None, :])
            kern = -_INV2PI * (r @ tx[i]) / np.einsum("qa,qa->q", r, r)
            out[i] += (ws * L) @ (kern * density(k, s))
    return out
