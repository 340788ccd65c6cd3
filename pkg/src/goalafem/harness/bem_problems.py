"""BEM benchmark problems on the L-shape for the adaptive loop."""

from __future__ import annotations

import numpy as np

from ..bem.estimators import BlockCache, cached_derivative_matrix, density_derivative, eta_bem, panel_targets
from ..bem.lshape import CORNERS, REENTRANT, exact_on_edge, lshape_exact, lshape_mesh, phi, point_at
from ..bem.operators import VCache, _panel_keys, assemble_V, assemble_rhs_dirichlet, check_diameter, cholesky_solve
from ..bem.weights import BemGoalWeight, interp_weight, interpolant_panel_data
from ..errors import InputError, NumericalError
from ..marking import LevelData
from ..mesh import bisect_1d
from ..quadrature import gauss_interval

__all__ = ["BEMGoalProblem", "bem_conforming", "bem_nonconforming", "reference_goal", "MIN_PANEL_ULPS"]

# panels shorter than this many units in the last place of the node coordinates
# are no longer resolved; forced marks halve the transition panels every level
MIN_PANEL_ULPS = 100


def _edge_and_lambda(x):
    """Polygon edge and relative position for points that lie strictly inside edges."""
    m = len(CORNERS)
    x = np.atleast_2d(x)
    edge = np.empty(len(x), np.int64)
    lam = np.empty(len(x))
    for k in range(m):
        a, b = CORNERS[k], CORNERS[(k + 1) % m]
        d = b - a
        L2 = d @ d
        rel = x - a
        t = rel @ d / L2
        off = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / np.sqrt(L2)
        on = (off < 1e-12) & (t > 0) & (t < 1)
        edge[on], lam[on] = k, t[on]
    return edge, lam


def reference_goal(weight, n=40):
    """``g(u) = ∫_Γ Λ u ds`` for the exact Neumann datum, by graded Gauss rules.

    Break points are the polygon corners and the kinks or jumps of ``Λ``.
    """
    from ..bem.lshape import CORNER_S, PERIMETER
    from ..quadrature import graded_rule

    if weight.kind == "conforming_hat":
        kinks = [weight.center - weight.width, weight.center, weight.center + weight.width]
    else:
        kinks = [weight.start, weight.stop]
    lo, hi = min(kinks), max(kinks)
    if lo < 0 or hi > PERIMETER:
        raise InputError("weight support must not wrap around s = 0")
    breaks = np.unique(np.concatenate([kinks, CORNER_S[(CORNER_S > lo) & (CORNER_S < hi)]]))
    total = 0.0
    s_re = CORNER_S[REENTRANT]
    t, w = gauss_interval(n)
    for a, b in zip(breaks[:-1], breaks[1:]):
        if abs(a - s_re) < 1e-14 or abs(b - s_re) < 1e-14:
            s, ws = graded_rule(a, b, s_re, 0.0, n=n, ratio=0.15, floor=1e-12)
        else:
            s, ws = a + (b - a) * t, (b - a) * w
        total += float(ws @ (weight(s) * lshape_exact(point_at(s))))
    return total


class BEMGoalProblem:
    """Weakly-singular equation on the L-shape with a weighted boundary-flux goal.

    The primal data derivative ``∂_s F`` is evaluated as ``∂_s(V u)`` with the
    exact density ``u``, since ``F = V u`` on ``Γ``.  Matrices and data are
    cached per panel and reused after refinement.
    """

    def __init__(self, weight, epsilon=0.0, reference=None, n_per_quarter=1, name="bem"):
        if epsilon < 0:
            raise InputError("epsilon must be nonnegative")
        self.weight = weight
        self.epsilon = float(epsilon)
        self.reference = reference_goal(weight) if reference is None else reference
        self.n_per_quarter = n_per_quarter
        self.name = name
        self._V = VCache()
        self._D = BlockCache()
        self._rhs = {}
        self._dF = {}

    def initial_mesh(self):
        mesh = lshape_mesh(self.n_per_quarter)
        check_diameter(mesh.nodes)
        return mesh

    def refine(self, mesh, marked):
        return bisect_1d(mesh, marked)

    def primal_data_derivative(self, mesh):
        """``∂_s F`` at the estimator targets, shape ``(n, q)``."""
        pts, w = panel_targets(mesh)
        q = len(w)
        keys = _panel_keys(mesh)
        todo = [i for i, k in enumerate(keys) if k not in self._dF]
        if todo:
            x = pts[todo].reshape(-1, 2)
            edge, _ = _edge_and_lambda(x)
            vals = density_derivative(x, edge, CORNERS, exact_on_edge, singular_corners=(REENTRANT,))
            for j, i in enumerate(todo):
                self._dF[keys[i]] = vals[j * q:(j + 1) * q]
        return np.stack([self._dF[k] for k in keys])

    def solve(self, mesh):
        V = assemble_V(mesh, self._V)
        rhs_u = assemble_rhs_dirichlet(mesh, phi, CORNERS, (REENTRANT,), cache=self._rhs)
        lam, forced = interp_weight(mesh, self.weight)
        rhs_z, dlam = interpolant_panel_data(mesh, lam)
        U, Z = cholesky_solve(V, np.stack([rhs_u, rhs_z], axis=1)).T
        return V, U, Z, dlam, forced

    def goal(self, mesh, U):
        """``g(U) = Σ_i U_i ∫_{T_i} Λ ds`` with the exact weight."""
        return float(U @ self.weight.panel_integrals(mesh))

    def check_resolution(self, mesh):
        """Raise :class:`NumericalError` once the shortest panel is below the rounding floor."""
        floor = MIN_PANEL_ULPS * np.spacing(np.abs(mesh.nodes).max())
        h = mesh.h.min()
        if h < floor:
            raise NumericalError(f"shortest panel {h:.2e} is below the resolvable length {floor:.2e}")

    def compute(self, mesh):
        self.check_resolution(mesh)
        V, U, Z, dlam, forced = self.solve(mesh)
        D = cached_derivative_matrix(mesh, self._D)
        dF = self.primal_data_derivative(mesh)
        q = dF.shape[1]
        eu = eta_bem(mesh, U, dF, self.epsilon, dual=False, D=D)
        ez = eta_bem(mesh, Z, np.repeat(dlam[:, None], q, axis=1), self.epsilon, dual=True, D=D)
        return LevelData(eu.values, ez.values, self.goal(mesh, U), forced=forced,
                         extra={"U": U, "Z": Z})


def bem_conforming(reference=None):
    """Hat weight with peak at ``s = 1/4`` on the initial mesh."""
    return BEMGoalProblem(BemGoalWeight("conforming_hat"), 0.0, reference, name="bem-conforming")


def bem_nonconforming(epsilon=0.3, reference=None):
    """Characteristic weight on the arc ``1/4 ≤ s ≤ 3/4`` with rescaled estimators."""
    return BEMGoalProblem(BemGoalWeight("characteristic"), epsilon, reference, name="bem-nonconforming")
