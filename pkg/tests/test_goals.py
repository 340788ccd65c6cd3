import numpy as np
import pytest

from goalafem.errors import InputError
from goalafem.fem import (DiscreteFunction, EllipticCoefficients, FESpace, LoadData,
                          assemble_dual, assemble_matrix, lift_dirichlet, solve)
from goalafem.goals import GoalSpec, goal_error, goal_flux, goal_volume
from goalafem.harness.fem_problems import T_G, _indicator_table, experiment_one, square_mesh


def test_goal_volume_examples():
    mesh = square_mesh(2)
    space = FESpace(mesh, 1)
    g2 = _indicator_table(mesh, T_G)
    assert goal_volume(DiscreteFunction.zero(space), g2=g2) == 0.0
    U = space.interpolate(lambda x: x[..., 0])
    assert goal_volume(U, g2=g2) == pytest.approx(-1 / 8, abs=1e-15)
    assert goal_volume(U, g2=g2, extended=True) == pytest.approx(-1 / 8, abs=1e-18)
    assert goal_volume(U, g1=1.0) == pytest.approx(0.5, abs=1e-15)


def test_goal_is_dual_bilinear_form(rng):
    prob = experiment_one(p=2)
    space = FESpace(prob.mesh0, 2)
    K = assemble_matrix(space, prob.coeffs)
    Z = solve(assemble_dual(space, prob.coeffs, prob.dual_load, matrix=K))
    v = rng.standard_normal(space.n_dofs)
    v[space.boundary_dofs] = 0
    V = DiscreteFunction(space, v)
    assert goal_volume(V, g2=prob.dual_load.f2) == pytest.approx(Z.coefficients @ K @ v, rel=1e-12)


def test_flux_of_constant_weight():
    # Λ ≡ 1 on the whole boundary: Z ≡ 1 and the flux equals -∫ f1
    space = FESpace(square_mesh(3), 1)
    coeffs = EllipticCoefficients()
    lift = lift_dirichlet(space, lambda x: np.ones(x.shape[:-1]))
    Z = solve(assemble_dual(space, coeffs, LoadData(), lift))
    assert np.allclose(Z.coefficients, 1.0)
    load = LoadData(1.0)
    assert goal_flux(Z, load, lift) == pytest.approx(-1.0, rel=1e-13)


def test_flux_rejects_mismatched_dual():
    space = FESpace(square_mesh(2), 1)
    with pytest.raises(InputError):
        goal_flux(DiscreteFunction.zero(space), LoadData(1.0), lambda x: np.ones(x.shape[:-1]))
    with pytest.raises(InputError):
        goal_flux(DiscreteFunction.zero(space), LoadData(1.0), U=DiscreteFunction.zero(space))


def test_goal_error_and_spec():
    assert np.isnan(goal_error(1.0, None))
    assert goal_error(1.0, 3.0) == 2.0
    assert goal_error(1.0, GoalSpec("volume", reference=0.5, source="quadrature")) == 0.5
    with pytest.raises(InputError):
        GoalSpec("volume", reference=0.5)
    with pytest.raises(InputError):
        GoalSpec("area")
