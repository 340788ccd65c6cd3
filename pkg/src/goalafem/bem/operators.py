"""Lowest-order Galerkin discretisation of the 2D simple-layer operator.

Kernel ``G(x, y) = -log|x - y| / (2π)``.  The inner panel integrals of ``G``
and of its tangential derivative have closed forms on straight panels; the
outer integrals use Gauss rules whose order grows as panels get closer and
geometrically graded rules for touching or very close pairs.

The double-layer operator is

    K φ(x) = (1/2π) ∫_Γ (x - y)·n_y / |x - y|² φ(y) ds_y,

normalised so that ``V(∂_n P) = (1/2 + K)(P|_Γ)`` for harmonic ``P``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, NumericalError
from ..quadrature import composite_rule, gauss_interval, graded_breaks, graded_rule

__all__ = [
    "log_potential",
    "log_potential_derivative",
    "self_entry",
    "assemble_V",
    "VCache",
    "slp_derivative_matrix",
    "double_layer",
    "edge_far_rule",
    "segment_distance",
    "assemble_rhs_dirichlet",
    "check_diameter",
]

_INV2PI = 1.0 / (2.0 * np.pi)


def _local(x, a, b):
    """Coordinates of ``x`` relative to panel ``[a, b]``: ``σ0, σ1`` along it, ``v`` off it."""
    d = b - a
    L = np.hypot(d[..., 0], d[..., 1])
    t = d / L[..., None]
    rel = a - x
    u0 = np.einsum("...a,...a->...", rel, t)
    v = rel[..., 0] * t[..., 1] - rel[..., 1] * t[..., 0]
    return u0, u0 + L, v, t


def _log_antiderivative(s, v):
    # d/ds [ s/2 log(s² + v²) - s + |v| atan(s/|v|) ] = log(s² + v²) / 2
    r2 = s * s + v * v
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(r2 > 0, 0.5 * s * np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
    av = np.abs(v)
    return lg - s + av * np.arctan2(s, av)


def log_potential(x, a, b):
    """``∫_{[a,b]} log|x - y| ds_y`` for points ``x`` (broadcast against panels)."""
    s0, s1, v, _ = _local(x, a, b)
    return _log_antiderivative(s1, v) - _log_antiderivative(s0, v)


def log_potential_derivative(x, tx, a, b):
    """``∂/∂t_x ∫_{[a,b]} log|x - y| ds_y``; principal value when ``x`` lies on the panel."""
    s0, s1, v, t = _local(x, a, b)
    n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    ct = np.einsum("...a,...a->...", t, tx)
    cn = np.einsum("...a,...a->...", n, tx)
    # ∇_x log|x - y| = (x - y)/|x - y|²  with  y - x = σ t + v n
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = 0.5 * np.log((s1 * s1 + v * v) / (s0 * s0 + v * v))
        ang = np.where(v != 0, np.arctan(s1 / np.where(v != 0, v, 1.0)) - np.arctan(s0 / np.where(v != 0, v, 1.0)), 0.0)
    # ∫ (x - y)·t_x / |x - y|² = -∫ (σ ct + v cn) / (σ² + v²) dσ
    return -(ct * lg + cn * ang)


def self_entry(h):
    """``-1/(2π) ∫_T ∫_T log|x - y|`` for a straight panel of length ``h``."""
    h = np.asarray(h, float)
    return _INV2PI * h * h * (1.5 - np.log(h))


def check_diameter(nodes):
    x = np.asarray(nodes, float)
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)).max()
    if d >= 1.0:
        raise ConfigurationError(f"diam(Γ) = {d:.4f} ≥ 1: the simple-layer operator may fail to be elliptic")
    return d


def _segment_distance(a1, b1, a2, b2):
    """Distance between segments (arrays broadcast), assuming they do not cross."""
    def pt_seg(p, a, b):
        d = b - a
        dd = np.einsum("...a,...a->...", d, d)
        lam = np.clip(np.einsum("...a,...a->...", p - a, d) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
        q = a + lam[..., None] * d
        return np.hypot(*(p - q).swapaxes(0, -1)).swapaxes(0, -1) if p.ndim > 1 else np.hypot(*(p - q))

    return np.minimum.reduce([pt_seg(a1, a2, b2), pt_seg(b1, a2, b2), pt_seg(a2, a1, b1), pt_seg(b2, a1, b1)])


# Gauss order on the outer panel by distance/length ratio; the inner integral is exact
_ORDERS = ((10.0, 4), (3.0, 6), (1.0, 10))


def _pair_entries(A, B, rows, cols):
    """Entries ``V_ij`` for panel index pairs; panel ``i`` is the outer (shorter) one."""
    a_i, b_i = A[rows], B[rows]
    a_j, b_j = A[cols], B[cols]
    h_i = np.hypot(*(b_i - a_i).T)
    dist = _segment_distance(a_i, b_i, a_j, b_j)
    ratio = dist / h_i
    out = np.empty(len(rows))
    todo = np.ones(len(rows), dtype=bool)
    for thresh, q in _ORDERS:
        sel = todo & (ratio >= thresh)
        if sel.any():
            t, w = gauss_interval(q)
            x = a_i[sel, None, :] + t[None, :, None] * (b_i[sel] - a_i[sel])[:, None, :]
            vals = log_potential(x, a_j[sel, None, :], b_j[sel, None, :])
            out[sel] = -_INV2PI * h_i[sel] * (vals @ w)
            todo &= ~sel
    for k in np.flatnonzero(todo):
        out[k] = _near_entry(a_i[k], b_i[k], a_j[k], b_j[k], dist[k])
    return out


def _near_entry(a, b, c, d, dist):
    """Outer integral graded toward the point of ``[a, b]`` closest to ``[c, d]``."""
    e = b - a
    L = np.hypot(*e)
    cands = []
    for p in (c, d):
        lam = np.clip(np.dot(p - a, e) / L**2, 0.0, 1.0)
        cands.append((np.hypot(*(a + lam * e - p)), lam))
    for lam in (0.0, 1.0):
        q = a + lam * e
        dd = _segment_distance(q[None], q[None], c[None], d[None])[0]
        cands.append((dd, lam))
    _, anchor = min(cands)
    s, ws = graded_rule(0.0, 1.0, anchor, dist / L, n=10, ratio=0.2, floor=1e-15)
    x = a[None, :] + s[:, None] * e[None, :]
    vals = log_potential(x, c[None, :], d[None, :])
    return -_INV2PI * L * float(ws @ vals)


@dataclass
class VCache:
    """Previously assembled matrix keyed by panel identity, reused after refinement."""

    keys: dict = field(default_factory=dict)
    matrix: np.ndarray | None = None


def _panel_keys(mesh):
    return list(zip(mesh.root.tolist(), mesh.path.tolist()))


def assemble_V(mesh, cache=None):
    """Dense symmetric Galerkin matrix of the simple-layer operator for piecewise constants.

    Entries for pairs of panels already present in ``cache`` are copied; the
    cache is updated in place.
    """
    A, B = mesh.start, mesh.end
    n = mesh.n_elements
    keys = _panel_keys(mesh)
    V = np.empty((n, n))
    known = np.zeros(n, dtype=bool)
    if cache is not None and cache.matrix is not None:
        old = np.array([cache.keys.get(k, -1) for k in keys])
        known = old >= 0
        ki = np.flatnonzero(known)
        V[np.ix_(ki, ki)] = cache.matrix[np.ix_(old[ki], old[ki])]
    # upper triangle of every pair involving at least one new panel
    I, J = np.triu_indices(n, k=1)
    need = ~(known[I] & known[J])
    I, J = I[need], J[need]
    h = mesh.h
    swap = h[J] < h[I]
    rows = np.where(swap, J, I)
    cols = np.where(swap, I, J)
    chunk = 200_000
    for s in range(0, len(rows), chunk):
        vals = _pair_entries(A, B, rows[s:s + chunk], cols[s:s + chunk])
        V[I[s:s + chunk], J[s:s + chunk]] = vals
        V[J[s:s + chunk], I[s:s + chunk]] = vals
    new = np.flatnonzero(~known)
    V[new, new] = self_entry(h[new])
    if cache is not None:
        cache.keys = {k: i for i, k in enumerate(keys)}
        cache.matrix = V
    return V


def slp_derivative_matrix(targets, tangents, mesh):
    """Matrix ``D`` with ``(D U)_k = ∂_t (V U)(x_k)`` for piecewise-constant ``U``.

    ``targets`` must avoid panel endpoints.
    """
    x = np.asarray(targets, float)[:, None, :]
    tx = np.asarray(tangents, float)[:, None, :]
    return -_INV2PI * log_potential_derivative(x, tx, mesh.start[None], mesh.end[None])


# ----------------------------------------------------------------------
# double-layer operator and Dirichlet data


def _edge_rule(x, a, b, singular, n=10):
    """Nodes on polygon edge ``[a, b]`` graded toward the point nearest ``x`` and toward
    the relative positions listed in ``singular``."""
    e = b - a
    L = np.hypot(*e)
    lam = np.clip(np.dot(x - a, e) / L**2, 0.0, 1.0)
    dist = np.hypot(*(a + lam * e - x)) / L
    pieces = [graded_breaks(0.0, 1.0, lam, dist, ratio=0.25, floor=1e-12)]
    pieces += [graded_breaks(0.0, 1.0, s, 0.0, ratio=0.25, floor=1e-12) for s in singular]
    s, ws = composite_rule(np.concatenate(pieces), n)
    return a[None, :] + s[:, None] * e[None, :], ws * L


def edge_far_rule(singular, pieces=8, n=10):
    """Rule on ``[0, 1]`` for targets at least ``1/pieces`` edge lengths away from an edge.

    The edge is cut into ``pieces`` equal parts; parts touching a relative
    position in ``singular`` are graded toward it.
    """
    br = [np.linspace(0.0, 1.0, pieces + 1)]
    br += [graded_breaks(0.0, 1.0, s, 0.0, ratio=0.25, floor=1e-12) for s in singular]
    return composite_rule(np.concatenate(br), n)


def segment_distance(x, a, b):
    """Distance from points ``x`` to the segment ``[a, b]`` and the clipped relative foot point."""
    e = b - a
    lam = np.clip((x - a) @ e / (e @ e), 0.0, 1.0)
    return np.hypot(*(a + lam[:, None] * e - x).T), lam


FAR = 8  # targets farther than edge length / FAR share one quadrature rule per edge


def double_layer(x, phi_fn, corners, singular_corners=(), n=10):
    """``K φ(x)`` for boundary points ``x`` of the closed polygon with vertices ``corners``.

    Targets far from an edge share one composite rule; closer targets get a
    rule graded toward their nearest point.  Edges containing ``x``
    contribute nothing because the kernel vanishes along a straight edge.
    """
    x = np.atleast_2d(np.asarray(x, float))
    corners = np.asarray(corners, float)
    m = len(corners)
    out = np.zeros(len(x))
    for k in range(m):
        a, b = corners[k], corners[(k + 1) % m]
        e = b - a
        L = np.hypot(*e)
        nrm = np.array([e[1], -e[0]]) / L
        sing = [0.0 if k == c else 1.0 for c in singular_corners if c in (k, (k + 1) % m)]
        online = np.abs((x - a) @ nrm) < 1e-14 * L  # kernel is zero on the edge's line
        dist, _ = segment_distance(x, a, b)
        far = ~online & (dist >= L / FAR)
        if far.any():
            s, ws = edge_far_rule(sing, FAR, n)
            y = a[None, :] + s[:, None] * e[None, :]
            r = x[far, None, :] - y[None]
            kern = (r @ nrm) / np.einsum("tqa,tqa->tq", r, r)
            out[far] += _INV2PI * (kern @ (ws * L * phi_fn(y)))
        for i in np.flatnonzero(~online & ~far):
            y, wy = _edge_rule(x[i], a, b, sing, n)
            r = x[i][None, :] - y
            kern = (r @ nrm) / np.einsum("qa,qa->q", r, r)
            out[i] += _INV2PI * float(wy @ (kern * phi_fn(y)))
    return out


def assemble_rhs_dirichlet(mesh, phi_fn, corners, singular_corners=(), cache=None, n_outer=8):
    """``rhs_i = ∫_{T_i} (K + 1/2) φ ds``.

    The outer rule on a panel ending at a polygon corner is graded toward that
    corner.  ``cache`` (a dict keyed by panel identity) stores entries across
    refinement levels.
    """
    corners = np.asarray(corners, float)
    keys = _panel_keys(mesh)
    rhs = np.empty(mesh.n_elements)
    todo = []
    for i, key in enumerate(keys):
        if cache is not None and key in cache:
            rhs[i] = cache[key]
        else:
            todo.append(i)
    if not todo:
        return rhs
    t, w = gauss_interval(n_outer)
    pts, wts, owner = [], [], []
    for i in todo:
        a, b = mesh.start[i], mesh.end[i]
        ends = [s for s, p in ((0.0, a), (1.0, b)) if np.min(np.hypot(*(corners - p).T)) < 1e-14]
        if ends:
            br = [graded_breaks(0.0, 1.0, s, 0.0, ratio=0.2, floor=1e-10) for s in ends]
            s, ws = composite_rule(np.concatenate(br), n_outer)
        else:
            s, ws = t, w
        pts.append(a[None, :] + s[:, None] * (b - a)[None, :])
        wts.append(mesh.h[i] * ws)
        owner.append(np.full(len(s), i))
    x, wx, owner = np.concatenate(pts), np.concatenate(wts), np.concatenate(owner)
    F = 0.5 * phi_fn(x) + double_layer(x, phi_fn, corners, singular_corners)
    vals = np.bincount(owner, wx * F, minlength=mesh.n_elements)
    rhs[todo] = vals[todo]
    if cache is not None:
        cache.update((keys[i], rhs[i]) for i in todo)
    return rhs


def cholesky_solve(V, rhs, rtol=1e-10):
    """Solve with a Cholesky factorisation and check the Galerkin residual."""
    from scipy.linalg import LinAlgError, cho_factor, cho_solve

    try:
        fac = cho_factor(V, lower=True)
    except LinAlgError as exc:
        raise NumericalError(f"simple-layer matrix is not positive definite: {exc}") from exc
    rhs = np.asarray(rhs, float)
    x = cho_solve(fac, rhs)
    b2, x2 = rhs.reshape(len(rhs), -1), x.reshape(len(x), -1)
    scale = np.maximum(np.linalg.norm(b2, axis=0), np.finfo(float).tiny)
    res = np.linalg.norm(b2 - V @ x2, axis=0) / scale
    if np.any(res > rtol):
        raise NumericalError(f"Galerkin residual {res.max():.2e} exceeds {rtol:.0e}")
    return x
