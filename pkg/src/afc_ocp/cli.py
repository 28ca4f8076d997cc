"""Command line entry point.

Three subcommands, each taking one TOML configuration file:

    afc-ocp run <config>            solve and write fields plus bound reports
    afc-ocp convergence <config>    refinement study with error tables
    afc-ocp limiter-dump <config>   per-edge fluxes and factors of one step

Exit codes: 0 on success, 2 when a solve fails to converge, 1 for
configuration problems.
"""

import argparse
import sys

from .errors import ConfigError, FixedPointFailure, SolverFailure, StepFailure
from .experiments import (
    load_config,
    run_convergence_study,
    run_layer_experiment,
    run_limiter_dump,
)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="afc-ocp",
        description="Flux-corrected finite element solver for constrained "
        "parabolic optimal control problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, descr in (
        ("run", "solve the configured problem and write field snapshots"),
        ("convergence", "run a mesh refinement study"),
        ("limiter-dump", "write per-edge fluxes and correction factors"),
    ):
        cmd = sub.add_parser(name, help=descr)
        cmd.add_argument("config", help="path to a TOML configuration file")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"afc-ocp: configuration error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "run":
            runs = run_layer_experiment(cfg)
            for run in runs:
                print(
                    f"m={run.m}: converged in {run.report.iterations} outer "
                    f"iterations, {run.report.wall_time:.2f}s"
                )
        elif args.command == "convergence":
            study = run_convergence_study(cfg)
            for level in study.levels:
                order = level.state.order_l2
                order_str = "--" if order is None else f"{order:.3f}"
                print(
                    f"m={level.m}: state L2 {level.state.err_l2:.4e} "
                    f"(order {order_str}), {level.outer_iterations} outer iterations"
                )
        else:
            for path in run_limiter_dump(cfg):
                print(f"wrote {path}")
    except ConfigError as exc:
        print(f"afc-ocp: configuration error: {exc}", file=sys.stderr)
        return 1
    except (FixedPointFailure, StepFailure, SolverFailure) as exc:
        print(f"afc-ocp: solve failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
