"""Goal functionals: volume goals and weighted boundary fluxes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputError
from .fem import DiscreteFunction, LoadData, assemble_load, assemble_matrix

__all__ = ["GoalSpec", "goal_volume", "goal_flux", "goal_error"]


@dataclass(frozen=True)
class GoalSpec:
    """A goal functional plus an optional reference value.

    ``kind`` is ``"volume"`` (data ``g1``, ``g2``), ``"flux"`` (boundary
    weight ``weight``) or ``"bem_weight"``.  ``source`` says where the
    reference came from, e.g. ``"extrapolated"`` or ``"quadrature"``.
    """

    kind: str
    g1: Callable | float | None = None
    g2: np.ndarray | None = None
    weight: Callable | None = None
    reference: float | None = None
    source: str | None = None

    def __post_init__(self):
        if self.kind not in ("volume", "flux", "bem_weight"):
            raise InputError(f"unknown goal kind {self.kind!r}")
        if self.reference is not None and self.source is None:
            raise InputError("a reference value needs a source tag")


def goal_volume(U, g1=None, g2=None, extended=False):
    """``∫ g1 U - g2·∇U dx``; ``extended`` accumulates in long double."""
    if not isinstance(U, DiscreteFunction):
        raise InputError("goal_volume expects a DiscreteFunction")
    vec = assemble_load(U.space, LoadData(g1, g2), extended)
    return float(vec @ U.coefficients.astype(vec.dtype))


def goal_flux(Z, load, weight=None, coeffs=None, U=None, atol=1e-12):
    """Discrete weighted boundary flux.

    ``Z`` solves the dual problem with boundary values equal to the weight.
    Returns ``-f(Z)``; when the primal solution ``U`` carries inhomogeneous
    Dirichlet data, pass it with ``coeffs`` to get ``a(U, Z) - f(Z)``, which
    reduces to ``a(û, Z) - f(Z)`` for any lifting ``û`` of that data.
    """
    space = Z.space
    if weight is not None:
        bd = space.boundary_dofs
        lam = weight.coefficients[bd] if isinstance(weight, DiscreteFunction) \
            else np.asarray(weight(space.dof_coordinates[bd]), float)
        if np.any(np.abs(Z.coefficients[bd] - lam) > atol * max(1.0, np.abs(lam).max(initial=0.0))):
            raise InputError("dual solution does not match the boundary weight")
    value = -float(assemble_load(space, load) @ Z.coefficients)
    if U is not None:
        if coeffs is None:
            raise InputError("coefficients are needed to evaluate a(U, Z)")
        if U.space is not space:
            raise InputError("primal and dual solutions live on different spaces")
        K = assemble_matrix(space, coeffs)
        value += float(Z.coefficients @ (K @ U.coefficients))
    return value


def goal_error(value, reference):
    """``|g_ref - g_l|``; NaN when there is no reference."""
    ref = reference.reference if isinstance(reference, GoalSpec) else reference
    if ref is None:
        return float("nan")
    return abs(float(ref) - float(value))
