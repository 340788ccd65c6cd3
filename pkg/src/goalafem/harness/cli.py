"""Command-line entry point: ``goalafem run | sweep | report | reference``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from ..errors import GoalAfemError
from ..marking import STRATEGIES
from .experiments import PROBLEMS, ExperimentConfig, read_config_file, run, sweep

__all__ = ["main", "build_parser"]


def _add_run_options(p):
    p.add_argument("--config", help="flat key = value file; command-line flags override it")
    p.add_argument("--problem", choices=sorted(PROBLEMS))
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--theta", type=float)
    p.add_argument("--p", type=int, choices=(1, 2, 3), help="polynomial degree (FEM problems)")
    p.add_argument("--nu", type=float, help="diffusion coefficient (exp2)")
    p.add_argument("--epsilon", type=float, help="estimator rescaling (bem-nonconforming)")
    p.add_argument("--max-elements", type=int, help="stop once the mesh has this many elements")
    p.add_argument("--tol", type=float, help="stop once eta_u * eta_z <= tol")
    p.add_argument("--ncum-quantity", choices=("product", "goal_err"),
                   help="quantity compared against --tol for N_cum")
    p.add_argument("--out", help="output directory")
    p.add_argument("--snapshot-every", type=int, help="dump the mesh every k levels")


def build_parser():
    parser = argparse.ArgumentParser(prog="goalafem", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one adaptive run")
    _add_run_options(p)

    p = sub.add_parser("sweep", help="N_cum over strategies and marking parameters")
    _add_run_options(p)
    p.add_argument("--strategies", default="A,B,C,primal_only,dual_only",
                   help="comma-separated strategies")
    p.add_argument("--thetas", default="0.1:0.9:0.1", help="start:stop:step or a comma list")

    p = sub.add_parser("report", help="render figures from run or sweep output")
    p.add_argument("directory")
    p.add_argument("--format", default="png")

    p = sub.add_parser("reference", help="recompute a reference goal value by a fine adaptive run")
    p.add_argument("problem", choices=("exp1", "exp2"))
    p.add_argument("--p", type=int, default=3, choices=(1, 2, 3))
    p.add_argument("--nu", type=float, default=1e-3)
    p.add_argument("--max-elements", type=int, default=80_000)
    return parser


def _config(args):
    values = read_config_file(args.config) if args.config else {}
    for key in ExperimentConfig.__dataclass_fields__:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return ExperimentConfig(**values)


def _thetas(spec):
    if ":" in spec:
        a, b, h = (float(s) for s in spec.split(":"))
        return np.round(np.arange(a, b + h / 2, h), 10)
    return [float(s) for s in spec.split(",")]


def _print_fits(result):
    for fit in result.fits.values():
        print(f"  {fit.quantity:9s} slope {fit.slope:+.3f}  over N in [{fit.window[0]}, {fit.window[1]}]")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = _config(args)
            res = run(cfg)
            h = res.history
            print(f"{cfg.problem} {cfg.strategy} theta={cfg.theta:g}: {len(h)} levels, "
                  f"N={h.N[-1]}, eta_u*eta_z={h.product[-1]:.3e}")
            _print_fits(res)
            if res.ncum is not None:
                print(f"  N_cum={res.ncum.ncum} reached={res.ncum.reached}")
            return 1 if res.history.aborted else 0
        if args.command == "sweep":
            cfg = _config(args)
            rows = sweep(cfg, args.strategies.split(","), _thetas(args.thetas), cfg.out)
            for s, th, nc in rows:
                print(f"{s:12s} theta={th:.2f} N_cum={nc.ncum:9d} {'' if nc.reached else '(not reached)'}")
            return 0
        if args.command == "report":
            from .report import render

            for path in render(args.directory, args.format):
                print(path)
            return 0
        if args.command == "reference":
            from .fem_problems import experiment_one, experiment_two
            from .references import compute_reference

            prob = experiment_one(args.p) if args.problem == "exp1" else experiment_two(args.nu)
            value, spread, n = compute_reference(prob, max_elements=args.max_elements)
            print(f"{args.problem}: {value!r}  spread {spread:.2e}  final N {n}")
            return 0
    except GoalAfemError as exc:
        print(f"goalafem: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
