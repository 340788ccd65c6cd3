"""Experiment configuration, problem registry, runs, sweeps and CSV output."""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, GoalAfemError, InputError
from ..marking import STRATEGIES, MarkingConfig, adaptive_loop
from ..mesh import BoundaryMesh
from .rates import fit_rate, ncum_at_tolerance
from .references import reference_for

__all__ = [
    "ExperimentConfig",
    "PROBLEMS",
    "build_problem",
    "run",
    "RunResult",
    "sweep",
    "write_history",
    "read_config_file",
    "HISTORY_COLUMNS",
]

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("ell", "N", "eta_u", "eta_z", "product", "goal_err", "marked", "chosen", "ncum")
RATE_QUANTITIES = ("product", "eta_u", "eta_z", "goal_err")

# default element budgets per problem
PROBLEMS = {
    "exp1": 30_000,
    "exp2": 20_000,
    "bem-conforming": 4_000,
    "bem-nonconforming": 4_000,
}


@dataclass
class ExperimentConfig:
    """One adaptive run.  All computations are deterministic; there is no seed."""

    problem: str = "exp1"
    strategy: str = "A"
    theta: float = 0.5
    p: int = 3
    nu: float = 1e-3
    epsilon: float = 0.3
    max_elements: int | None = None
    tol: float | None = None
    ncum_quantity: str = "product"
    out: str | None = None
    snapshot_every: int = 0

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f"unknown problem {self.problem!r}; choose from {', '.join(PROBLEMS)}")
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {self.strategy!r}")
        if not 0.0 < self.theta <= 1.0:
            raise ConfigurationError("theta must lie in (0, 1]")
        if self.p not in (1, 2, 3):
            raise ConfigurationError("p must be 1, 2 or 3")
        if self.nu <= 0:
            raise ConfigurationError("nu must be positive")
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be nonnegative")
        if self.tol is not None and self.tol <= 0:
            raise ConfigurationError("tol must be positive")
        if self.ncum_quantity not in ("product", "goal_err"):
            raise ConfigurationError("ncum_quantity must be 'product' or 'goal_err'")
        if self.snapshot_every < 0:
            raise ConfigurationError("snapshot_every must be nonnegative")

    @property
    def budget(self):
        return PROBLEMS[self.problem] if self.max_elements is None else int(self.max_elements)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


_FIELD_TYPES = {
    "problem": str, "strategy": str, "theta": float, "p": int, "nu": float, "epsilon": float,
    "max_elements": int, "tol": float, "ncum_quantity": str, "out": str, "snapshot_every": int,
}


def read_config_file(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for num, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{num}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _FIELD_TYPES:
                raise ConfigurationError(f"{path}:{num}: unknown key {key!r}")
            try:
                values[key] = None if val.lower() == "none" else _FIELD_TYPES[key](val)
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{num}: bad value for {key}: {val!r}") from exc
    return values


def build_problem(config):
    """Problem object for ``config`` with its reference goal value attached."""
    from .bem_problems import bem_conforming, bem_nonconforming
    from .fem_problems import experiment_one, experiment_two

    if config.problem == "exp1":
        return experiment_one(config.p, reference_for("exp1"))
    if config.problem == "exp2":
        return experiment_two(config.nu, reference_for("exp2"))
    if config.problem == "bem-conforming":
        return bem_conforming()
    return bem_nonconforming(config.epsilon)


@dataclass
class RunResult:
    config: ExperimentConfig
    history: object
    fits: dict = field(default_factory=dict)
    ncum: object = None

    @property
    def partial(self):
        """True when the run stopped early or missed the tolerance."""
        return self.history.aborted is not None or (self.ncum is not None and not self.ncum.reached)


def _fits(history):
    fits = {}
    for q in RATE_QUANTITIES:
        try:
            fits[q] = fit_rate(history, q)
        except InputError as exc:
            log.info("no rate for %s: %s", q, exc)
    return fits


def run(config, problem=None, callback=None):
    """Run the adaptive loop for ``config`` and write its outputs when ``config.out`` is set.

    Writes ``history.csv`` with a ``history.dat`` mirror, ``rates.txt`` and,
    with ``snapshot_every = k``, mesh dumps every ``k`` levels.
    """
    problem = build_problem(config) if problem is None else problem
    snap = None
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        if config.snapshot_every:
            snap = _Snapshots(config.out, config.snapshot_every)

    def cb(rec, mesh, data):
        if snap is not None:
            snap(rec, mesh, data)
        if callback is not None:
            callback(rec, mesh, data)

    history = adaptive_loop(problem, MarkingConfig(config.theta, config.strategy),
                            max_elements=config.budget, tol=config.tol, callback=cb)
    result = RunResult(config, history, _fits(history))
    if config.tol is not None:
        result.ncum = ncum_at_tolerance(history, config.tol, config.ncum_quantity)
    if config.out:
        write_history(history, os.path.join(config.out, "history.csv"))
        write_rates(result.fits, os.path.join(config.out, "rates.txt"))
    if result.partial:
        log.warning("partial result for %s/%s: %s", config.problem, config.strategy,
                    history.aborted or "tolerance not reached within the element budget")
    return result


class _Snapshots:
    def __init__(self, out, every):
        self.dir = os.path.join(out, "meshes")
        os.makedirs(self.dir, exist_ok=True)
        self.every = every

    def __call__(self, rec, mesh, data):
        if rec.ell % self.every:
            return
        with open(os.path.join(self.dir, f"level_{rec.ell:03d}.mesh"), "w") as fh:
            mesh.dump(fh)
        if isinstance(mesh, BoundaryMesh):
            rows = np.column_stack([np.arange(mesh.n_elements), mesh.midpoints, mesh.h,
                                    data.extra["U"], data.eta_u, data.eta_z])
            np.savetxt(os.path.join(self.dir, f"level_{rec.ell:03d}_panels.csv"), rows,
                       delimiter=",", header="panel,mid_x,mid_y,h,U,eta_u2,eta_z2", comments="",
                       fmt=["%d"] + ["%.17g"] * 6)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{v:.17g}"
    return str(v)


def write_history(history, path):
    """``history.csv`` plus a whitespace-separated ``.dat`` mirror next to it."""
    ncum = history.column("ncum")
    if np.any(ncum != np.cumsum(history.N)):
        raise GoalAfemError("ncum column is not the prefix sum of N")
    rows = [[_fmt(getattr(r, c)) for c in HISTORY_COLUMNS] for r in history.records]
    with open(path, "w") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    with open(os.path.splitext(path)[0] + ".dat", "w") as fh:
        fh.write("# " + " ".join(HISTORY_COLUMNS) + "\n")
        for row in rows:
            fh.write(" ".join(row) + "\n")


def write_rates(fits, path):
    with open(path, "w") as fh:
        fh.write("quantity,slope,window,residual\n")
        for fit in fits.values():
            fh.write(fit.line() + "\n")


def sweep(base, strategies, thetas, out=None):
    """Run every ``(strategy, θ)`` pair and collect ``N_cum`` at ``base.tol``.

    Returns a list of ``(strategy, theta, NcumResult)``; writes ``ncum.csv``
    (and a ``.dat`` mirror) to ``out`` when given.
    """
    if base.tol is None:
        raise ConfigurationError("a sweep needs a tolerance")
    rows = []
    for s in strategies:
        for th in thetas:
            sub = None if out is None else os.path.join(out, f"{s}_theta{th:.2f}")
            res = run(base.replace(strategy=s, theta=float(th), out=sub))
            rows.append((s, float(th), res.ncum))
            log.info("sweep %s theta=%.2f ncum=%d reached=%s", s, th, res.ncum.ncum, res.ncum.reached)
    if out is not None:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "ncum.csv"), "w") as fh, \
                open(os.path.join(out, "ncum.dat"), "w") as dat:
            fh.write("strategy,theta,ncum,reached\n")
            dat.write("# strategy theta ncum reached\n")
            for s, th, nc in rows:
                fh.write(f"{s},{th:.2f},{nc.ncum},{int(nc.reached)}\n")
                dat.write(f"{s} {th:.2f} {nc.ncum} {int(nc.reached)}\n")
    return rows
