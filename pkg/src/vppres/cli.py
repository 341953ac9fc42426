"""Command-line entry point.

    vppres <command> --config <path> --out <dir> [--format csv|json]
                     [--dt <s>] [--lattice <n>]

Exit codes: 0 success, 2 configuration error, 3 infeasible problem,
4 solver non-convergence, 1 anything else.
"""

import argparse
import dataclasses
import sys

from .errors import ConfigError, InfeasibleError, SolverError
from .scenario import CASES, SolverKnobs, emit, load_config, run_case

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vppres",
        description="Minimal frequency-regulation reserve sizing and "
                    "allocation for virtual power plants.")
    sub = parser.add_subparsers(dest="command", required=True)
    for case in CASES:
        p = sub.add_parser(case, help=f"run the {case} case")
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--dt", type=float, default=None,
                       help="override the trajectory sampling step (s)")
        p.add_argument("--lattice", type=int, default=None,
                       help="override the stability-fit lattice size n (n x n)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.dt is not None or args.lattice is not None:
            knobs = dataclasses.asdict(cfg.solver)
            if args.dt is not None:
                knobs["dt_trajectory"] = args.dt
            if args.lattice is not None:
                knobs["lattice_n"] = args.lattice
            cfg = dataclasses.replace(cfg, solver=SolverKnobs(**knobs))
        report = run_case(cfg, args.command)
        paths = emit(report, args.format, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
