"""Dörfler marking, goal-oriented selection strategies and the adaptive loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import GoalAfemError, InputError

__all__ = [
    "STRATEGIES",
    "MarkingConfig",
    "LevelData",
    "LevelRecord",
    "AdaptiveHistory",
    "AdaptiveProblem",
    "doerfler_min_set",
    "select_A",
    "select_B",
    "select_C",
    "mark",
    "adaptive_loop",
    "halving_lag",
]

log = logging.getLogger(__name__)

STRATEGIES = ("A", "B", "C", "primal_only", "dual_only", "uniform")
_GUARD = 1e-12


@dataclass(frozen=True)
class MarkingConfig:
    theta: float = 0.5
    strategy: str = "A"

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise InputError(f"theta must lie in (0, 1], got {self.theta}")
        if self.strategy not in STRATEGIES:
            raise InputError(f"unknown strategy {self.strategy!r}; choose from {', '.join(STRATEGIES)}")


def _ranking(values):
    # descending by value, ascending index on ties
    return np.lexsort((np.arange(len(values)), -values))


def doerfler_min_set(indicators2, theta):
    """Smallest set ``M`` with ``theta * Σ_all ≤ Σ_M`` (sorted greedy, ties by index).

    Returns sorted element indices.
    """
    x = np.asarray(indicators2, dtype=float)
    if x.ndim != 1 or np.any(x < 0) or not np.all(np.isfinite(x)):
        raise InputError("indicators must be a finite nonnegative vector")
    if not 0.0 < theta <= 1.0:
        raise InputError("theta must lie in (0, 1]")
    if x.size == 0:
        return np.zeros(0, np.int64)
    order = _ranking(x)
    csum = np.cumsum(x[order])
    total = csum[-1]
    if total == 0.0:
        return np.zeros(0, np.int64)
    k = int(np.searchsorted(csum, theta * total, side="left")) + 1
    k = min(k, len(x))
    chosen = np.sort(order[:k])
    assert theta * total <= np.sum(x[chosen]) * (1 + _GUARD), "Dörfler property violated"
    return chosen


def select_A(mark_u, mark_z):
    """The smaller of the two sets; primal wins ties."""
    mark_u, mark_z = np.asarray(mark_u, np.int64), np.asarray(mark_z, np.int64)
    return mark_u if len(mark_u) <= len(mark_z) else mark_z


def select_B(mark_u, mark_z, indicators2_u, indicators2_z):
    """Smaller set plus equally many largest contributions of the other set."""
    mark_u, mark_z = np.asarray(mark_u, np.int64), np.asarray(mark_z, np.int64)
    if len(mark_u) <= len(mark_z):
        small, other, ind = mark_u, mark_z, np.asarray(indicators2_z, float)
    else:
        small, other, ind = mark_z, mark_u, np.asarray(indicators2_u, float)
    k = len(small)
    if k == 0:
        return small
    vals = ind[other]
    top = other[np.lexsort((other, -vals))[:k]]
    return np.union1d(small, top)


def combined_indicators(indicators2_u, indicators2_z, totals=None):
    """``ρ(T)² = η_u(T)² η_z² + η_u² η_z(T)²``."""
    u = np.asarray(indicators2_u, float)
    z = np.asarray(indicators2_z, float)
    tu, tz = (np.sum(u), np.sum(z)) if totals is None else totals
    return u * tz + tu * z


def select_C(indicators2_u, indicators2_z, totals, theta):
    """Dörfler marking on the combined indicators ``ρ(T)²``."""
    rho = combined_indicators(indicators2_u, indicators2_z, totals)
    tu, tz = totals
    expect = 2.0 * tu * tz
    assert abs(np.sum(rho) - expect) <= _GUARD * max(expect, np.finfo(float).tiny), \
        "combined indicators do not sum to 2 η_u² η_z²"
    return doerfler_min_set(rho, theta)


def mark(config, indicators2_u, indicators2_z):
    """Apply ``config.strategy``; returns ``(marked, chosen)`` with a short label."""
    u = np.asarray(indicators2_u, float)
    z = np.asarray(indicators2_z, float)
    theta, s = config.theta, config.strategy
    if s == "uniform":
        return np.arange(len(u), dtype=np.int64), "all"
    if s == "C":
        return select_C(u, z, (float(np.sum(u)), float(np.sum(z))), theta), "rho"
    mu = doerfler_min_set(u, theta) if s != "dual_only" else None
    mz = doerfler_min_set(z, theta) if s != "primal_only" else None
    if s == "primal_only":
        return mu, "u"
    if s == "dual_only":
        return mz, "z"
    smaller = "u" if len(mu) <= len(mz) else "z"
    if s == "A":
        return select_A(mu, mz), smaller
    return select_B(mu, mz, u, z), smaller


# ----------------------------------------------------------------------
# adaptive loop


@dataclass
class LevelData:
    """What a problem reports for one mesh."""

    eta_u: np.ndarray
    eta_z: np.ndarray
    goal: float
    forced: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


class AdaptiveProblem(Protocol):
    reference: float | None

    def initial_mesh(self): ...

    def compute(self, mesh) -> LevelData: ...

    def refine(self, mesh, marked): ...


@dataclass
class LevelRecord:
    ell: int
    N: int
    eta_u: float
    eta_z: float
    product: float
    goal: float
    goal_err: float
    marked: int
    chosen: str
    ncum: int
    seconds: float = 0.0


@dataclass
class AdaptiveHistory:
    config: MarkingConfig
    records: list = field(default_factory=list)
    aborted: str | None = None
    meshes: list = field(default_factory=list)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    @property
    def N(self):
        return self.column("N")

    @property
    def product(self):
        return self.column("product")

    def __len__(self):
        return len(self.records)

    def check(self):
        N = self.N
        if len(N) > 1 and np.any(np.diff(N) <= 0):
            raise GoalAfemError("element counts are not strictly increasing")
        if np.any(self.column("ncum") != np.cumsum(N)):
            raise GoalAfemError("cumulative element counts are inconsistent")


def adaptive_loop(problem, config, max_elements=200_000, tol=None, max_levels=500,
                  keep_meshes=False, callback=None):
    """Solve, estimate, mark, refine until a stop rule fires.

    Stops once the current mesh has at least ``max_elements`` elements, when
    ``η_u η_z ≤ tol``, when the product vanishes or after ``max_levels``.
    A numerical failure ends the loop and is recorded in ``history.aborted``.
    """
    history = AdaptiveHistory(config)
    mesh = problem.initial_mesh()
    ncum = 0
    reference = getattr(problem, "reference", None)
    for ell in range(max_levels):
        t0 = time.perf_counter()
        try:
            data = problem.compute(mesh)
        except GoalAfemError as exc:
            history.aborted = f"level {ell}: {exc}"
            log.warning("adaptive loop aborted: %s", history.aborted)
            break
        tu, tz = float(np.sum(data.eta_u)), float(np.sum(data.eta_z))
        eu, ez = np.sqrt(tu), np.sqrt(tz)
        n = mesh.n_elements
        ncum += n
        err = abs(reference - data.goal) if reference is not None else float("nan")
        stop = n >= max_elements or (tol is not None and eu * ez <= tol) or eu * ez == 0.0
        if stop:
            marked, chosen = np.zeros(0, np.int64), "-"
        else:
            marked, chosen = mark(config, data.eta_u, data.eta_z)
            if data.forced is not None and len(data.forced):
                marked = np.union1d(marked, data.forced)
        rec = LevelRecord(ell, n, eu, ez, eu * ez, data.goal, err, len(marked), chosen, ncum,
                          time.perf_counter() - t0)
        history.records.append(rec)
        if keep_meshes:
            history.meshes.append(mesh)
        if callback is not None:
            callback(rec, mesh, data)
        log.info("level %d  N=%d  eta_u=%.3e  eta_z=%.3e  marked=%d", ell, n, eu, ez, len(marked))
        if stop or len(marked) == 0:
            break
        new = problem.refine(mesh, marked)
        _check_refined(mesh, new, marked)
        mesh = new
    history.check()
    return history


def _check_refined(old, new, marked):
    if new.n_elements <= old.n_elements:
        raise GoalAfemError("refinement did not increase the number of elements")
    keys = set(zip(new.root.tolist(), new.path.tolist()))
    for T in np.asarray(marked):
        if (int(old.root[T]), int(old.path[T])) in keys:
            raise GoalAfemError(f"marked element {int(T)} survived refinement")


def halving_lag(product):
    """Smallest ``n`` with ``q[l + n] ≤ q[l] / 2`` for all levels ``l``; ``None`` if none."""
    q = np.asarray(product, float)
    for n in range(1, len(q)):
        if np.all(q[n:] <= 0.5 * q[:-n]):
            return n
    return None
