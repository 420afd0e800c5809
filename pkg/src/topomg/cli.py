"""Command-line interface: `topomg run`, `topomg grid`, `topomg report`.

Exit codes: 0 success, 1 usage/configuration error, 2 runtime failure
(nonconvergence, I/O error during the run).
"""

import argparse
import json
import os
import sys

from . import bench


def _set_threads(n):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _load_config(path, output_override):
    with open(path) as fh:
        raw = json.load(fh)
    cfg = bench.BenchConfig.from_dict(raw)
    if output_override:
        cfg.output_dir = output_override
    return cfg


def _cmd_run(args):
    if args.print_schema:
        json.dump(bench.CONFIG_SCHEMA, sys.stdout, indent=2)
        print()
        return 0
    if not args.config:
        print("error: a config file is required (or use --print-schema)",
              file=sys.stderr)
        return 1
    _set_threads(args.threads)
    try:
        cfg = _load_config(args.config, args.output)
    except FileNotFoundError:
        print("error: config file not found: %s" % args.config, file=sys.stderr)
        return 1
    except (json.JSONDecodeError, ValueError) as exc:
        print("error: invalid configuration: %s" % exc, file=sys.stderr)
        return 1
    except Exception as exc:  # jsonschema.ValidationError without the import
        print("error: invalid configuration: %s" % exc, file=sys.stderr)
        return 1
    code, written = bench.run_benchmark(cfg)
    for path in written:
        print("wrote %s" % path)
    return code


def _cmd_grid(args):
    _set_threads(args.threads)
    raw = {
        "problem": "grid_diagnostic",
        "preconditioner": {"strategy": args.strategy},
        "grid": {"domain": args.domain, "feature_width": args.width,
                 "pitches": [args.pitch_x]},
        "output_dir": args.output,
    }
    try:
        cfg = bench.BenchConfig.from_dict(raw)
        result = bench.run_grid_point(cfg, args.pitch_x, args.pitch_y)
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except Exception as exc:
        print("grid solve failed: %s" % exc, file=sys.stderr)
        return 2
    print(bench.GRID_CSV_HEADER)
    print("%d,%d,%s,%d,%.6f,%.6f" % (
        result["pitch_x"], result["pitch_y"], result["strategy"],
        result["iterations"], result["setup_s"], result["solve_s"]))
    if not result["converged"]:
        print("solver did not converge", file=sys.stderr)
        return 2
    return 0


def _cmd_report(args):
    try:
        report = bench.compare_report(args.csv)
    except FileNotFoundError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    print(bench.format_report(report))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="topomg",
        description="Multigrid-preconditioned topology optimization benchmarks")
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run a configured benchmark")
    p_run.add_argument("config", nargs="?", help="JSON configuration file")
    p_run.add_argument("--threads", type=int, default=None,
                       help="BLAS/OpenMP thread count")
    p_run.add_argument("--output", default=None, help="output directory override")
    p_run.add_argument("--print-schema", action="store_true",
                       help="print the JSON config schema and exit")
    p_run.set_defaults(func=_cmd_run)

    p_grid = sub.add_parser("grid", help="single grid-diagnostic solve")
    p_grid.add_argument("--pitch-x", type=int, required=True)
    p_grid.add_argument("--pitch-y", type=int, required=True)
    p_grid.add_argument("--strategy", default="amg",
                        choices=["gmg", "amg", "hybrid", "hybrid_adaptive", "none"])
    p_grid.add_argument("--domain", type=int, default=264)
    p_grid.add_argument("--width", type=int, default=4)
    p_grid.add_argument("--threads", type=int, default=None)
    p_grid.add_argument("--output", default="topomg_out")
    p_grid.set_defaults(func=_cmd_grid)

    p_rep = sub.add_parser("report", help="compare benchmark CSVs")
    p_rep.add_argument("csv", nargs="+", help="two or more result CSV files")
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        return 1
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
