import numpy as np
import pytest
import scipy.sparse as sp

from conftest import random_refinement, two_triangle_square
from goalafem.errors import InputError
from goalafem.fem import (DiscreteFunction, EllipticCoefficients, Factorization, FESpace, LoadData,
                          assemble_dual, assemble_load, assemble_matrix, assemble_primal,
                          bilinear_form, factorize, lift_dirichlet, solve)
from goalafem.harness.fem_problems import experiment_one, pulse, square_mesh
from goalafem.mesh import nvb_refine

ROT = EllipticCoefficients(convection=lambda x: np.stack([x[..., 1], 0.5 - x[..., 0]], axis=-1))


def refined_square(rng, steps=3):
    return random_refinement(square_mesh(2), rng, steps, frac=0.5)[-1]


@pytest.mark.parametrize("p, u, f1", [
    (1, lambda x: 1 + 2 * x[..., 0] - 3 * x[..., 1], None),
    (2, lambda x: x[..., 0] ** 2 + x[..., 0] * x[..., 1], -2.0),
    (3, lambda x: x[..., 0] ** 3 - 3 * x[..., 0] * x[..., 1] ** 2, None),
])
def test_patch_test(rng, p, u, f1):
    space = FESpace(refined_square(rng), p)
    system = assemble_primal(space, EllipticCoefficients(), LoadData(f1), lift_dirichlet(space, u))
    U = solve(system)
    assert np.max(np.abs(U.coefficients - u(space.dof_coordinates))) <= 1e-10


def test_patch_test_with_convection(rng):
    # b·∇u for u = x is the y component of the field: f1 = x[1]
    u = lambda x: x[..., 0]
    space = FESpace(refined_square(rng), 2)
    system = assemble_primal(space, ROT, LoadData(lambda x: x[..., 1]), lift_dirichlet(space, u))
    U = solve(system)
    assert np.max(np.abs(U.coefficients - u(space.dof_coordinates))) <= 1e-10


@pytest.mark.parametrize("p", [1, 2, 3])
def test_dual_matrix_is_transpose(rng, p):
    space = FESpace(refined_square(rng), p)
    K = assemble_matrix(space, ROT)
    primal = assemble_primal(space, ROT, LoadData(1.0), matrix=K)
    dual = assemble_dual(space, ROT, LoadData(1.0), matrix=K)
    diff = abs(dual.full_matrix - primal.full_matrix.T).max()
    assert diff <= 1e-14 * abs(K).max()
    assert abs(dual.matrix - primal.matrix.T).max() <= 1e-14 * abs(K).max()


def test_matrix_matches_bilinear_form(rng):
    space = FESpace(refined_square(rng, 2), 2)
    cu, cv = rng.standard_normal((2, space.n_dofs))
    # zero traces so that integration by parts leaves no boundary term
    cu[space.boundary_dofs] = cv[space.boundary_dofs] = 0
    u, v = DiscreteFunction(space, cu), DiscreteFunction(space, cv)
    K = assemble_matrix(space, ROT)
    assert bilinear_form(space, ROT, u, v) == pytest.approx(v.coefficients @ K @ u.coefficients, rel=1e-13)
    # the transposed coefficients swap the arguments
    assert bilinear_form(space, ROT.transposed(), v, u) == pytest.approx(
        bilinear_form(space, ROT, u, v), rel=1e-12, abs=1e-12)


def test_extended_assembly_agrees(rng):
    space = FESpace(refined_square(rng, 2), 3)
    K = assemble_matrix(space, EllipticCoefficients())
    Kx = assemble_matrix(space, EllipticCoefficients(), extended=True)
    assert Kx.dtype == np.longdouble
    assert abs(K - Kx.astype(float)).max() <= 1e-12


@pytest.mark.parametrize("p", [1, 2, 3])
def test_galerkin_residual(rng, p):
    space = FESpace(refined_square(rng), p)
    load = LoadData(lambda x: np.sin(3 * x[..., 0]) + x[..., 1])
    system = assemble_primal(space, ROT, load)
    U = solve(system)
    r = system.matrix @ U.coefficients[system.free] - system.rhs
    assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(system.rhs)


def test_dual_solve_reuses_factorization(rng):
    space = FESpace(refined_square(rng), 2)
    K = assemble_matrix(space, ROT)
    primal = assemble_primal(space, ROT, LoadData(1.0), matrix=K)
    dual = assemble_dual(space, ROT, LoadData(lambda x: x[..., 0]), matrix=K)
    fac = factorize(primal)
    Z1 = solve(dual, fac, transpose=True)
    Z2 = solve(dual)
    assert np.allclose(Z1.coefficients, Z2.coefficients, rtol=0, atol=1e-12)


def test_factorization_small_systems(rng):
    one = Factorization(sp.csc_matrix([[4.0]]))
    assert one.solve(np.array([2.0]))[0] == 0.5
    M = rng.standard_normal((50, 50))
    A = M @ M.T + 50 * np.eye(50)
    b = rng.standard_normal(50)
    x = Factorization(sp.csc_matrix(A)).solve(b)
    assert np.allclose(x, np.linalg.solve(A, b), rtol=1e-12, atol=0)


def test_no_free_dofs():
    space = FESpace(two_triangle_square(), 1)
    system = assemble_primal(space, EllipticCoefficients(), LoadData(1.0))
    assert system.matrix.shape == (0, 0)
    assert np.all(solve(system).coefficients == 0)


def test_exp1_load_supported_on_corner_triangle():
    prob = experiment_one(p=2)
    space = FESpace(prob.mesh0, 2)
    F = assemble_load(space, prob.load)
    support = np.flatnonzero(F)
    tf = np.flatnonzero(prob.load.f2[:, 0])
    assert set(support) <= set(space.dofs[tf].ravel())
    # ∫_{T_f} ∂_1 v summed over a partition of unity vanishes
    assert abs(F.sum()) <= 1e-15


def test_pulse_lifting():
    space = FESpace(square_mesh(6), 1)
    lift = lift_dirichlet(space, pulse(1 / 6, 1 / 3, 1 / 2))
    x = space.dof_coordinates
    on = np.isclose(x[:, 1], 0) & np.isclose(x[:, 0], 1 / 3)
    assert lift.coefficients[on] == pytest.approx([1.0])
    assert lift.coefficients.sum() == pytest.approx(1.0)
    assert np.all(lift.coefficients[space.free] == 0)


def test_lifting_rejects_unrepresentable_trace():
    space = FESpace(square_mesh(2), 1)
    with pytest.raises(InputError):
        lift_dirichlet(space, lambda x: x[..., 0] ** 2)


def energy_errors(p, levels):
    u_norm2 = np.pi**2 / 2  # ∫|∇(sin πx sin πy)|²
    load = LoadData(lambda x: 2 * np.pi**2 * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1]))
    N, err = [], []
    mesh = square_mesh(2)
    for _ in range(levels):
        space = FESpace(mesh, p)
        system = assemble_primal(space, EllipticCoefficients(), load)
        U = solve(system)
        K = system.full_matrix
        N.append(mesh.n_elements)
        err.append(np.sqrt(u_norm2 - U.coefficients @ K @ U.coefficients))
        mesh = nvb_refine(nvb_refine(mesh, np.arange(mesh.n_elements)), np.arange(2 * mesh.n_elements))
    return np.array(N), np.array(err)


@pytest.mark.parametrize("p, levels", [(1, 5), (2, 4), (3, 4)])
def test_uniform_energy_rate(p, levels):
    N, err = energy_errors(p, levels)
    slope = np.polyfit(np.log(N[1:]), np.log(err[1:]), 1)[0]
    assert abs(slope + p / 2) <= 0.15
