import numpy as np
import pytest
from scipy.integrate import quad

from goalafem.bem import (CORNERS, PERIMETER, REENTRANT, BemGoalWeight, VCache, assemble_rhs_dirichlet,
                          assemble_V, check_diameter, cholesky_solve, density_derivative, double_layer,
                          eta_bem, interp_weight, lshape_exact, lshape_mesh, panel_targets, phi, point_at,
                          self_entry, slp_derivative_matrix)
from goalafem.bem.lshape import CORNER_S, edge_of
from goalafem.errors import ConfigurationError, InputError, NumericalError
from goalafem.harness.bem_problems import MIN_PANEL_ULPS, bem_conforming, bem_nonconforming, reference_goal
from goalafem.mesh import BoundaryMesh, bisect_1d

R = 0.4


def circle(n, R=R):
    t = 2 * np.pi * np.arange(n) / n
    return BoundaryMesh(R * np.stack([np.cos(t), np.sin(t)], axis=1))


def uniform(mesh, times):
    for _ in range(times):
        mesh = bisect_1d(mesh, np.arange(mesh.n_elements))
    return mesh


@pytest.mark.parametrize("h", [1.0, 0.25, 1e-3, 1e-7])
def test_self_entry(h):
    inner = lambda s: quad(lambda t: np.log(abs(s - t)), 0, h, points=[s], limit=200)[0]
    double = quad(inner, 0, h, limit=200)[0]
    assert self_entry(h) == pytest.approx(-double / (2 * np.pi), rel=1e-10)
    assert self_entry(h) == pytest.approx(h * h / (2 * np.pi) * (1.5 - np.log(h)), rel=1e-14)


def test_V_symmetric_positive_definite():
    mesh = uniform(lshape_mesh(), 3)
    V = assemble_V(mesh)
    assert np.array_equal(V, V.T)
    assert np.linalg.eigvalsh(V).min() > 0


def test_V_cache_reuses_entries():
    mesh = lshape_mesh()
    cache = VCache()
    assemble_V(mesh, cache)
    fine = bisect_1d(mesh, [0, 3])
    assert np.allclose(assemble_V(fine, cache), assemble_V(fine), rtol=1e-14, atol=0)


def test_diameter_guard():
    assert check_diameter(lshape_mesh().nodes) == pytest.approx(1 / np.sqrt(2))
    with pytest.raises(ConfigurationError):
        check_diameter(circle(8, R=0.6).nodes)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_disk_fourier_modes(k):
    # V cos kθ = R/(2k) cos kθ on the circle of radius R
    errs = []
    for n in (16, 32, 64, 128):
        mesh = circle(n)
        mid = 2 * np.pi * (np.arange(n) + 0.5) / n
        U = np.cos(k * mid)
        errs.append(np.abs(assemble_V(mesh) @ U / mesh.h - R / (2 * k) * U).max() / (R / (2 * k)))
    errs = np.array(errs)
    assert np.all(errs[1:] < 0.5 * errs[:-1])
    assert errs[-1] < 2e-3


def test_double_layer_of_cosine_on_disk():
    # (K + 1/2) cos θ = cos θ / 2 on the circle, so K cos θ → 0 on inscribed polygons
    errs = []
    for n in (16, 64, 256):
        mesh = circle(n)
        errs.append(np.abs(double_layer(mesh.midpoints, lambda y: y[:, 0] / R, mesh.nodes)).max())
    assert errs[1] < errs[0] / 8 and errs[2] < errs[1] / 8


def test_double_layer_of_constant():
    # consistent Calderón convention: (K + 1/2) 1 = 0 since the flux of a constant vanishes
    s = np.array([0.1, 0.3, 0.6, 0.9, 0.999, 1.001, 1.2, 1.7])
    K1 = double_layer(point_at(s), lambda y: np.ones(len(y)), CORNERS, (REENTRANT,))
    assert np.abs(K1 + 0.5).max() <= 1e-9


def test_calderon_consistency_improves():
    # V applied to the L²-projection of the exact density approaches the rhs (K + 1/2) φ
    gaps = []
    for nq in (1, 2, 4, 8):
        mesh = lshape_mesh(nq)
        s0 = mesh.arclength
        P = np.array([quad(lambda s: lshape_exact(point_at(s))[0], a, a + h, limit=200)[0]
                      for a, h in zip(s0, mesh.h)]) / mesh.h
        rhs = assemble_rhs_dirichlet(mesh, phi, CORNERS, (REENTRANT,))
        gaps.append(np.linalg.norm(assemble_V(mesh) @ P - rhs) / np.linalg.norm(rhs))
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] < 0.2 * gaps[0]


def test_rhs_cache():
    mesh = lshape_mesh()
    cache = {}
    assemble_rhs_dirichlet(mesh, phi, CORNERS, (REENTRANT,), cache=cache)
    fine = bisect_1d(mesh, [2, 5])
    a = assemble_rhs_dirichlet(fine, phi, CORNERS, (REENTRANT,), cache=cache)
    b = assemble_rhs_dirichlet(fine, phi, CORNERS, (REENTRANT,))
    assert np.array_equal(a, b)


def test_exact_density_matches_finite_differences():
    s = np.array([0.1, 0.4, 0.6, 0.8, 0.95, 1.05, 1.3, 1.6, 1.9])
    x = point_at(s)
    k = edge_of(x)
    a, b = CORNERS[k], CORNERS[(k + 1) % 6]
    d = (b - a) / np.hypot(*(b - a).T)[:, None]
    n = np.stack([d[:, 1], -d[:, 0]], axis=1)
    eps = 1e-5
    # one-sided fourth-order difference from inside the domain
    f = [phi(x - j * eps * n) for j in range(5)]
    fd = (25 * f[0] - 48 * f[1] + 36 * f[2] - 16 * f[3] + 3 * f[4]) / (12 * eps)
    assert np.allclose(lshape_exact(x), fd, rtol=1e-6, atol=1e-8)


def test_exact_density_symmetry_and_singularity():
    t = np.array([1e-6, 1e-4, 0.1, 0.4])
    left, right = lshape_exact(point_at(1 - t)), lshape_exact(point_at(1 + t))
    assert np.allclose(left, right, rtol=1e-10, atol=0)
    slope = np.log(abs(right[0] / right[1])) / np.log(t[0] / t[1])
    assert slope == pytest.approx(-1 / 3, abs=0.01)
    with pytest.raises(InputError):
        lshape_exact(CORNERS[REENTRANT])


def test_corners_have_expected_arclength():
    assert np.allclose(point_at(CORNER_S), CORNERS, atol=1e-15)
    assert np.allclose(point_at(PERIMETER), CORNERS[0], atol=1e-15)
    assert np.allclose(CORNERS[REENTRANT], 0.0, atol=1e-15)


def test_density_derivative_matches_matrix_for_piecewise_constants():
    mesh = BoundaryMesh(CORNERS)
    c = np.array([0.3, -1.0, 2.0, 0.5, -0.7, 1.1])
    pts, _ = panel_targets(mesh)
    x = pts.reshape(-1, 2)
    edge = np.repeat(np.arange(6), pts.shape[1])
    got = density_derivative(x, edge, CORNERS, lambda k, lam: np.full(np.shape(lam), c[k]))
    D = slp_derivative_matrix(x, mesh.tangents[edge], mesh)
    # graded 10-point rules resolve the near-corner targets to about 1e-10
    assert np.allclose(got, D @ c, rtol=0, atol=1e-9)


def test_eta_bem_properties(rng):
    mesh = uniform(lshape_mesh(), 2)
    pts, w = panel_targets(mesh)
    D = slp_derivative_matrix(pts.reshape(-1, 2), np.repeat(mesh.tangents, len(w), axis=0), mesh)
    W = rng.standard_normal(mesh.n_elements)
    # data that is exactly V W has no residual
    assert eta_bem(mesh, W, D @ W, D=D).total <= 1e-24
    dF = rng.standard_normal((mesh.n_elements, len(w)))
    plain = eta_bem(mesh, W, dF, 0.0, D=D).values
    assert np.array_equal(plain, eta_bem(mesh, W, dF, 0.0, dual=True, D=D).values)
    assert np.allclose(eta_bem(mesh, W, dF, 0.3, D=D).values, plain * mesh.h ** -0.3, rtol=1e-13)
    assert np.allclose(eta_bem(mesh, W, dF, 0.3, dual=True, D=D).values, plain * mesh.h ** 0.3, rtol=1e-13)
    with pytest.raises(InputError):
        eta_bem(mesh, W, dF, -0.1, D=D)


def test_interp_weight():
    mesh = lshape_mesh()
    lam, forced = interp_weight(mesh, BemGoalWeight("conforming_hat"))
    assert forced.size == 0
    assert lam.tolist() == [0, 1, 0, 0, 0, 0, 0, 0]
    lam, forced = interp_weight(mesh, BemGoalWeight("characteristic"))
    assert lam.tolist() == [0, 1, 1, 1, 0, 0, 0, 0]
    assert forced.tolist() == [0, 3]
    fine = bisect_1d(mesh, forced)
    _, again = interp_weight(fine, BemGoalWeight("characteristic"))
    assert len(again) == 2
    assert np.allclose(fine.h[again], 0.5 * mesh.h[forced])


def test_weight_panel_integrals():
    mesh = bisect_1d(lshape_mesh(), [0, 1])
    for kind in ("conforming_hat", "characteristic"):
        wgt = BemGoalWeight(kind)
        exact = [quad(wgt, a, a + h, points=[0.25, 0.5, 0.75])[0] for a, h in zip(mesh.arclength, mesh.h)]
        assert np.allclose(wgt.panel_integrals(mesh), exact, rtol=0, atol=1e-14)
    with pytest.raises(InputError):
        BemGoalWeight("box")


@pytest.mark.parametrize("kind, pieces", [("conforming_hat", [0, 0.25, 0.5]),
                                          ("characteristic", [0.25, 0.5, 0.75])])
def test_reference_goal_against_quad(kind, pieces):
    wgt = BemGoalWeight(kind)
    f = lambda s: wgt(s) * lshape_exact(point_at(s))[0]
    exact = sum(quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0] for a, b in zip(pieces[:-1], pieces[1:]))
    assert reference_goal(wgt) == pytest.approx(exact, rel=1e-11)


def test_cholesky_solve():
    V = assemble_V(lshape_mesh())
    b = np.arange(1.0, 9.0)
    x = cholesky_solve(V, b)
    assert np.allclose(V @ x, b, rtol=1e-12)
    with pytest.raises(NumericalError):
        cholesky_solve(-V, b)


def test_problem_levels_and_resolution_guard():
    prob = bem_conforming()
    mesh = prob.initial_mesh()
    data = prob.compute(mesh)
    assert data.eta_u.shape == data.eta_z.shape == (8,)
    assert data.forced.size == 0
    assert abs(data.goal - prob.reference) < 0.1 * abs(prob.reference)
    nc = bem_nonconforming()
    assert nc.compute(mesh).forced.tolist() == [0, 3]
    tiny = BoundaryMesh(np.vstack([mesh.nodes[:1], mesh.nodes[:1] + [MIN_PANEL_ULPS * 1e-17, 0], mesh.nodes[1:]]))
    with pytest.raises(NumericalError):
        nc.compute(tiny)
