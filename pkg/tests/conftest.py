import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from goalafem.mesh import Mesh2, nvb_refine

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0].rstrip("abc")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def record():
    """Record a criterion outcome, then assert it."""

    def _record(key, ok, detail):
        ACCEPTANCE[key] = (bool(ok), detail)
        assert ok, f"criterion {key}: {detail}"

    return _record


def four_triangle_root():
    """Unit square cut by both diagonals."""
    v = [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]]
    t = [[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]]
    return Mesh2(v, t)


def two_triangle_square():
    """Unit square split along the diagonal from (1, 0) to (0, 1)."""
    return Mesh2([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 3], [1, 2, 3]])


def random_refinement(mesh, rng, steps, frac=0.3):
    """``steps`` NVB refinements, each marking a random fraction of the elements."""
    out = [mesh]
    for _ in range(steps):
        m = out[-1]
        k = max(1, int(rng.integers(1, max(2, int(frac * m.n_elements) + 1))))
        marked = rng.choice(m.n_elements, size=min(k, m.n_elements), replace=False)
        out.append(nvb_refine(m, marked))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
