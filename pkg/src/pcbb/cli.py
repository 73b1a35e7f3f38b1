"""Command line interface: ``pcbb <command> [options]``.

Commands:
    run               solve a configured problem and write its outputs
    bench-projection  time projections onto random sets
    check-gradient    compare adjoint gradients with central differences
    corpus            solve random quadratics and compare with the exhaustive oracle

Exit codes: 0 success, 1 failed check, 2 iteration cap reached before the
tolerance, 3 line-search failure, 64 invalid configuration or arguments.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from .config import ConfigError
from .corpus import active_set_oracle, quadratic_corpus
from .experiment import (
    EXIT_CONFIG,
    ExperimentConfig,
    check_gradient,
    parse_config,
    projection_bench,
    read_config,
    run_experiment,
)
from .heat_fvm import Grid, HeatProblem
from .solver import solve

EXIT_CHECK_FAILED = 1

# command-line flag -> [experiment] key
_RUN_FLAGS = {
    "problem": str,
    "grid": int,
    "ratio": float,
    "penalty": float,
    "volume_fraction": float,
    "iterations": int,
    "size": int,
    "trials": int,
    "seed": int,
    "output": str,
    "pcg_tol": float,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pcbb", description="Projected cyclic BB solver for knapsack-constrained problems.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="solve a configured problem")
    run.add_argument("--config", help="INI file with [experiment] and [solver] sections")
    for key, typ in _RUN_FLAGS.items():
        run.add_argument("--" + key.replace("_", "-"), dest=key, type=typ)
    run.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override any config entry, e.g. solver.window=10",
    )

    bench = sub.add_parser("bench-projection", help="time projections")
    bench.add_argument("--n", type=int, default=1_000_000)
    bench.add_argument("--trials", type=int, default=5)
    bench.add_argument("--seed", type=int, required=True)

    grad = sub.add_parser("check-gradient", help="finite-difference gradient check")
    grad.add_argument("--dim", type=int, choices=(2, 3), default=2)
    grad.add_argument("--grid", type=int, default=16)
    grad.add_argument("--ratio", type=float, default=2.0)
    grad.add_argument("--penalty", type=float, default=1.0)
    grad.add_argument("--directions", type=int, default=20)
    grad.add_argument("--step", type=float, default=1e-6)
    grad.add_argument("--tol", type=float, default=1e-5)
    grad.add_argument("--seed", type=int, default=0)

    corpus = sub.add_parser("corpus", help="random quadratics against the exhaustive oracle")
    corpus.add_argument("--count", type=int, default=200)
    corpus.add_argument("--max-n", type=int, default=6)
    corpus.add_argument("--tol", type=float, default=1e-6)
    corpus.add_argument("--seed", type=int, required=True)
    return parser


def _run(args) -> int:
    overrides = {key: getattr(args, key) for key in _RUN_FLAGS if getattr(args, key) is not None}
    raw = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got '{item}'")
        raw[key.strip() if "." in key else "experiment." + key.strip()] = value
    raw.update({f"experiment.{k}": v for k, v in overrides.items()})
    if args.config:
        cfg = read_config(args.config, raw)
    else:
        cfg = parse_config("", "<command line>", raw)

    report = run_experiment(cfg)
    if cfg.problem == "projection-bench":
        row = report.extra["bench"][0]
        print(
            f"n={row['n']} trials={row['trials']} mean={row['time_mean']:.4f}s "
            f"brent_iter_mean={row['brent_iter_mean']:.1f}"
        )
        return report.exit_code
    last = report.history[-1]
    print(
        f"status={report.status} iterations={last.k} f={last.f:.10g} "
        f"d1_inf={last.d1_inf:.3e} f_evals={last.evals} g_evals={last.grad_evals} "
        f"solve_time={report.timings['solve']:.3f}s"
    )
    if "oracle_error" in report.extra:
        print(f"oracle_error={report.extra['oracle_error']:.3e}")
    print(f"outputs written to {cfg.output}")
    return report.exit_code


def _bench(args) -> int:
    if args.n < 1 or args.trials < 1:
        raise ConfigError("--n and --trials must be positive")
    row = projection_bench(args.n, args.trials, args.seed)[0]
    for key, value in row.items():
        print(f"{key}={value}")
    return 0


def _check_gradient(args) -> int:
    prob = HeatProblem(Grid(args.dim, args.grid), k_alpha=1.0, k_beta=args.ratio, p=args.penalty)
    errors = check_gradient(prob, args.directions, args.seed, args.step)
    worst = float(errors.max())
    print(f"max_rel_error={worst:.3e} median_rel_error={float(np.median(errors)):.3e}")
    return 0 if worst <= args.tol else EXIT_CHECK_FAILED


def _corpus(args) -> int:
    if args.count < 1 or args.max_n < 2:
        raise ConfigError("--count must be positive and --max-n at least 2")
    cfg = ExperimentConfig(problem="quadratic", seed=args.seed).solver_config()
    worst, t0 = 0.0, time.perf_counter()
    for inst in quadratic_corpus(args.count, args.seed, args.max_n):
        res = solve(inst, inst.kset, np.zeros(inst.n), cfg)
        x_star = active_set_oracle(inst.Q, inst.q, inst.kset)
        worst = max(worst, float(np.max(np.abs(res.x_final - x_star))))
    print(f"instances={args.count} max_error={worst:.3e} time={time.perf_counter() - t0:.2f}s")
    return 0 if worst <= args.tol else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _run, "bench-projection": _bench, "check-gradient": _check_gradient, "corpus": _corpus}
    try:
        return handler[args.command](args)
    except ConfigError as exc:
        print(f"pcbb: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
