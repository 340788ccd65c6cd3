"""Lowest-order Galerkin BEM for the weakly-singular integral equation in 2D."""

from .estimators import cached_derivative_matrix, density_derivative, eta_bem, panel_targets
from .lshape import CORNERS, PERIMETER, REENTRANT, exact_on_edge, lshape_exact, lshape_mesh, phi, point_at
from .operators import (
    VCache,
    assemble_rhs_dirichlet,
    assemble_V,
    check_diameter,
    cholesky_solve,
    double_layer,
    log_potential,
    log_potential_derivative,
    self_entry,
    slp_derivative_matrix,
)
from .weights import BemGoalWeight, interp_weight

__all__ = [
    "BemGoalWeight",
    "CORNERS",
    "PERIMETER",
    "REENTRANT",
    "VCache",
    "assemble_V",
    "assemble_rhs_dirichlet",
    "cached_derivative_matrix",
    "check_diameter",
    "cholesky_solve",
    "density_derivative",
    "double_layer",
    "eta_bem",
    "exact_on_edge",
    "interp_weight",
    "log_potential",
    "log_potential_derivative",
    "lshape_exact",
    "lshape_mesh",
    "panel_targets",
    "phi",
    "point_at",
    "self_entry",
    "slp_derivative_matrix",
]
