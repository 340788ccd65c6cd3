import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goalafem.errors import GoalAfemError, InputError
from goalafem.marking import (LevelData, MarkingConfig, adaptive_loop, combined_indicators,
                              doerfler_min_set, halving_lag, mark, select_A, select_B, select_C)
from goalafem.mesh import BoundaryMesh, bisect_1d


def brute_force_min_size(x, theta):
    total = x.sum()
    for k in range(len(x) + 1):
        for sub in itertools.combinations(range(len(x)), k):
            if theta * total <= x[list(sub)].sum():
                return k
    return len(x)


def test_doerfler_examples():
    assert doerfler_min_set([9, 4, 4, 1], 0.5).tolist() == [0]
    assert doerfler_min_set([9, 4, 4, 1], 1.0).tolist() == [0, 1, 2, 3]
    assert doerfler_min_set([2.0], 0.3).tolist() == [0]
    assert doerfler_min_set([0, 0, 0], 0.5).size == 0
    assert doerfler_min_set([1, 1, 1, 1], 0.5).tolist() == [0, 1]


def test_doerfler_rejects_bad_input():
    with pytest.raises(InputError):
        doerfler_min_set([1, -1], 0.5)
    with pytest.raises(InputError):
        doerfler_min_set([1, np.nan], 0.5)
    with pytest.raises(InputError):
        doerfler_min_set([1, 2], 0.0)
    with pytest.raises(InputError):
        MarkingConfig(0.5, "D")


@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=10),
       st.sampled_from([0.3, 0.5, 0.7]))
def test_doerfler_is_minimal(x, theta):
    x = np.array(x)
    chosen = doerfler_min_set(x, theta)
    if x.sum() == 0:
        assert chosen.size == 0
        return
    assert theta * x.sum() <= x[chosen].sum() * (1 + 1e-12)
    assert len(chosen) == brute_force_min_size(x, theta)


def test_select_A_and_B():
    u = np.array([9.0, 1, 1, 1, 1])
    z = np.array([1.0, 2, 3, 4, 5])
    mu, mz = doerfler_min_set(u, 0.5), doerfler_min_set(z, 0.5)
    assert mu.tolist() == [0] and mz.tolist() == [3, 4]
    assert select_A(mu, mz).tolist() == [0]
    assert select_A([1], [2]).tolist() == [1]
    assert select_B(mu, mz, u, z).tolist() == [0, 4]
    assert select_B([], [1, 2], u, z).size == 0


def test_select_C_uniform_indicators():
    n, theta = 10, 0.45
    u = np.full(n, 0.3)
    z = np.full(n, 2.0)
    c = select_C(u, z, (u.sum(), z.sum()), theta)
    assert len(c) == int(np.ceil(theta * n))


def test_select_C_zero_dual():
    u = np.array([1.0, 2.0, 3.0])
    z = np.zeros(3)
    assert select_C(u, z, (u.sum(), 0.0), 0.5).size == 0


def test_combined_indicators_sum():
    rng = np.random.default_rng(3)
    u, z = rng.random(20), rng.random(20)
    assert combined_indicators(u, z).sum() == pytest.approx(2 * u.sum() * z.sum(), rel=1e-14)


def test_C_can_beat_A():
    # primal and dual error concentrate on disjoint elements
    u = np.array([10.0, 10, 0.1, 0.1, 0.1, 0.1])
    z = np.array([0.1, 0.1, 10, 10, 0.1, 0.1])
    a, _ = mark(MarkingConfig(0.5, "A"), u, z)
    c, _ = mark(MarkingConfig(0.5, "C"), u, z)
    assert len(c) <= len(a) + 1


def test_mark_labels():
    u, z = np.array([9.0, 1, 1]), np.array([1.0, 1, 1])
    assert mark(MarkingConfig(0.5, "uniform"), u, z)[0].tolist() == [0, 1, 2]
    assert mark(MarkingConfig(0.5, "primal_only"), u, z)[1] == "u"
    assert mark(MarkingConfig(0.5, "dual_only"), u, z)[1] == "z"
    assert mark(MarkingConfig(0.5, "A"), u, z)[1] == "u"


class ToyProblem:
    """Indicators ``h³`` weighted towards two points of the unit circle."""

    reference = 0.0

    def __init__(self, forced=None, fail_at=None):
        self.forced = forced
        self.fail_at = fail_at

    def initial_mesh(self):
        t = 2 * np.pi * np.arange(8) / 8
        return BoundaryMesh(np.stack([np.cos(t), np.sin(t)], axis=1))

    def compute(self, mesh):
        if self.fail_at is not None and mesh.n_elements >= self.fail_at:
            raise GoalAfemError("singular system")
        d = np.linalg.norm(mesh.midpoints - [1.0, 0.0], axis=1)
        eu = mesh.h ** 3 / (d + 0.1)
        ez = mesh.h ** 3 / (np.linalg.norm(mesh.midpoints - [-1.0, 0.0], axis=1) + 0.1)
        forced = None if self.forced is None else self.forced(mesh)
        return LevelData(eu, ez, float(np.sum(eu)), forced)

    def refine(self, mesh, marked):
        return bisect_1d(mesh, marked)


@pytest.mark.parametrize("strategy", ["A", "B", "C", "primal_only", "dual_only", "uniform"])
def test_loop_invariants(strategy):
    seen = []
    h = adaptive_loop(ToyProblem(), MarkingConfig(0.5, strategy), max_elements=200,
                      keep_meshes=True, callback=lambda r, m, d: seen.append(r.ell))
    N = h.N
    assert np.all(np.diff(N) > 0)
    assert N[-1] >= 200
    assert np.array_equal(h.column("ncum"), np.cumsum(N))
    assert seen == list(range(len(h)))
    assert h.aborted is None


def test_budget_at_initial_mesh_gives_one_level():
    h = adaptive_loop(ToyProblem(), MarkingConfig(0.5, "A"), max_elements=8)
    assert len(h) == 1 and h.records[0].marked == 0


def test_tolerance_stop():
    h = adaptive_loop(ToyProblem(), MarkingConfig(0.5, "C"), max_elements=10**6, tol=1e-4)
    assert h.product[-1] <= 1e-4 < h.product[-2]


def test_forced_elements_are_refined():
    forced = lambda mesh: np.array([mesh.n_elements - 1])
    h = adaptive_loop(ToyProblem(forced), MarkingConfig(0.5, "A"), max_elements=100, keep_meshes=True)
    for m, f in zip(h.meshes[:-1], h.meshes[1:]):
        key = (int(m.root[-1]), int(m.path[-1]))
        assert key not in f.keys()


def test_numerical_failure_is_recorded():
    h = adaptive_loop(ToyProblem(fail_at=20), MarkingConfig(0.5, "A"), max_elements=1000)
    assert h.aborted is not None and "singular" in h.aborted
    assert len(h) >= 1 and h.N[-1] < 20


def test_halving_lag():
    assert halving_lag([1.0, 0.5, 0.25, 0.125]) == 1
    assert halving_lag([1.0, 0.8, 0.5, 0.4, 0.25]) == 2
    assert halving_lag([1.0, 1.0]) is None
