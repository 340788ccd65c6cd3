"""Goal weights on the boundary: a conforming hat and a characteristic function."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from .lshape import PERIMETER

__all__ = ["BemGoalWeight", "interp_weight", "node_arclength"]

_TOL = 1e-12


def node_arclength(mesh):
    """Arclength of every node, with node 0 at ``s = 0``."""
    return mesh.arclength


@dataclass(frozen=True)
class BemGoalWeight:
    """``conforming_hat``: the hat with peak at ``s = center`` and support ``center ± width``.
    ``characteristic``: the indicator of the arc ``[start, stop]``.
    """

    kind: str
    center: float = 0.25
    width: float = 0.25
    start: float = 0.25
    stop: float = 0.75

    def __post_init__(self):
        if self.kind not in ("conforming_hat", "characteristic"):
            raise InputError(f"unknown weight kind {self.kind!r}")
        if self.kind == "characteristic" and not 0 <= self.start < self.stop <= PERIMETER:
            raise InputError("characteristic weight needs 0 ≤ start < stop ≤ perimeter")

    def __call__(self, s):
        """Exact weight at arclength ``s``."""
        s = np.mod(np.asarray(s, float), PERIMETER)
        if self.kind == "conforming_hat":
            d = np.abs(s - self.center)
            d = np.minimum(d, PERIMETER - d)
            return np.clip(1.0 - d / self.width, 0.0, None)
        return ((s >= self.start - _TOL) & (s <= self.stop + _TOL)).astype(float)

    def panel_integrals(self, mesh):
        """``∫_T Λ ds`` for every panel, exact for both kinds on nested meshes."""
        s0 = node_arclength(mesh)
        s1 = s0 + mesh.h
        if self.kind == "conforming_hat":
            return 0.5 * mesh.h * (self(s0) + self(s1))
        return np.clip(np.minimum(s1, self.stop) - np.maximum(s0, self.start), 0.0, None)


def interp_weight(mesh, weight):
    """Nodal interpolant ``Λ_l`` and the panels where it is not constant.

    Returns ``(values at nodes, forced panels)``.  For the conforming hat the
    interpolant is exact and no panel is forced.
    """
    s = node_arclength(mesh)
    lam = weight(s)
    if weight.kind == "conforming_hat":
        return lam, np.zeros(0, np.int64)
    nxt = np.roll(lam, -1)
    forced = np.flatnonzero(lam != nxt)
    return lam, forced


def interpolant_panel_data(mesh, nodal):
    """``∫_T Λ_l ds`` and ``∂_s Λ_l`` on every panel for a continuous piecewise-linear ``Λ_l``."""
    nxt = np.roll(nodal, -1)
    return 0.5 * mesh.h * (nodal + nxt), (nxt - nodal) / mesh.h
