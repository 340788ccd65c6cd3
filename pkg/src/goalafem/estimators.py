"""Residual error indicators for the primal and dual FEM problems."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InputError
from .fem import DiscreteFunction, EllipticCoefficients, FESpace, LoadData
from .quadrature import gauss_interval, triangle_rule

__all__ = ["EstimatorField", "eta_primal", "eta_dual", "restrict", "residual_indicators"]

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass
class EstimatorField:
    """Squared per-element indicators ``η(T)²`` on a mesh."""

    mesh: object
    values: np.ndarray
    total: float = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_elements,):
            raise InputError("one indicator per element expected")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise InputError("indicators must be finite and nonnegative")
        self.total = float(np.sum(self.values))

    @property
    def eta(self):
        """``η = (Σ η(T)²)^(1/2)``."""
        return float(np.sqrt(self.total))

    def __len__(self):
        return len(self.values)


def restrict(est, subset):
    """``Σ_{T in subset} η(T)²``."""
    idx = np.asarray(list(subset) if not isinstance(subset, np.ndarray) else subset, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= len(est.values)):
        raise InputError("subset is not contained in the mesh")
    return float(np.sum(est.values[np.unique(idx)]))


@lru_cache(maxsize=None)
def _edge_tables(p):
    """Basis gradients at Gauss points on each local edge, shape ``(3, Q, nloc, 2)``."""
    from .fem import _element

    t, w = gauss_interval(p + 1)
    el = _element(p)
    tabs = []
    for k in range(3):
        a, b = _REF_VERTS[k], _REF_VERTS[(k + 1) % 3]
        tabs.append(el.gradients(a[None, :] + t[:, None] * (b - a)[None, :]))
    return t, w, np.stack(tabs)


def residual_indicators(space, coeffs, load, W):
    """Volume and jump contributions for the operator given by ``coeffs``."""
    if not isinstance(W, DiscreteFunction) or W.space is not space:
        raise InputError("discrete function does not live on this space")
    mesh = space.mesh
    p = space.p
    _, _, Binv, det = space.geometry
    area = 0.5 * det
    h = np.sqrt(area)
    A = coeffs.diffusion_on(mesh)
    f2 = load.f2_on(mesh)
    loc = W.local()

    # volume residual  -tr(A H W) + b·∇W + c W - f1
    pts, w = triangle_rule(2 * p + 2)
    el = space.element
    phi = el.values(pts)
    hess = el.hessians(pts)
    C = np.einsum("eak,ekl,ebl->eab", Binv, A, Binv)
    res = -np.einsum("eab,qiab,ei->eq", C, hess, loc)
    c = coeffs.reaction_on(mesh)
    x = None
    if np.any(c):
        res += c[:, None] * (loc @ phi.T)
    if coeffs.convection is not None:
        x = space.map_points(pts)
        res += np.einsum("eqa,eqa->eq", np.asarray(coeffs.convection(x), float), W.gradients_at(pts))
    if load.f1 is not None:
        x = space.map_points(pts) if x is None else x
        res -= load.f1_at(x)
    volume = h**2 * det * (res**2 @ w)

    # normal-flux jumps on interior edges
    t, tw, gtab = _edge_tables(p)
    e2t = mesh.edge_elements
    e2l = mesh.edge_local_index
    inner = np.flatnonzero(e2t[:, 1] >= 0)
    jump = np.zeros(mesh.n_elements)
    if inner.size:
        Tp, Tm = e2t[inner, 0], e2t[inner, 1]
        kp, km = e2l[inner, 0], e2l[inner, 1]
        tri = mesh.triangles
        verts = mesh.vertices
        a = verts[tri[Tp, kp]]
        b = verts[tri[Tp, (kp + 1) % 3]]
        d = b - a
        length = np.hypot(d[:, 0], d[:, 1])
        n = np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None]

        def flux(T, k, reverse):
            g = gtab[k]  # (E, Q, nloc, 2)
            if reverse:
                g = g[:, ::-1]
            gref = np.einsum("eqia,ei->eqa", g, loc[T])
            grad = np.einsum("eqa,eab->eqb", gref, Binv[T])
            return np.einsum("eab,eqb->eqa", A[T], grad) + f2[T][:, None, :]

        J = np.einsum("eqa,ea->eq", flux(Tp, kp, False) - flux(Tm, km, True), n)
        sq = length * (J**2 @ tw)
        np.add.at(jump, Tp, h[Tp] * sq)
        np.add.at(jump, Tm, h[Tm] * sq)
    return volume, jump


def eta_primal(space: FESpace, coeffs: EllipticCoefficients, load: LoadData, U):
    """Residual indicators of the primal Galerkin solution."""
    vol, jmp = residual_indicators(space, coeffs, load, U)
    return EstimatorField(space.mesh, vol + jmp)


def eta_dual(space: FESpace, coeffs: EllipticCoefficients, dual_load: LoadData, Z):
    """Residual indicators of the dual solution; uses the formal adjoint operator."""
    vol, jmp = residual_indicators(space, coeffs.transposed(), dual_load, Z)
    return EstimatorField(space.mesh, vol + jmp)
