"""Command-line driver: ``hesspcl run|sweep|verify``."""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .experiment import PROBLEMS, SWEEP_AXES, ConfigError, config_from_mapping, execute, load_config, sweep
from .optim import OPTIMIZERS


def _add_config_flags(p):
    p.add_argument("--config", metavar="FILE", help="flat JSON configuration; flags override it")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--optimizer", choices=OPTIMIZERS)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=int, help="cells per side (FD) or mesh divisions (FEM)")
    p.add_argument("--depth", type=int, help="hidden layers")
    p.add_argument("--width", type=int, help="neurons per hidden layer")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--out", metavar="DIR")


def _parse_value(axis, text):
    return text if axis == "optimizer" else int(text)


def build_parser():
    parser = argparse.ArgumentParser(prog="hesspcl", description="Exact-Hessian training of PDE-constrained networks.")
    parser.add_argument("--version", action="version", version=f"hesspcl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="optimize one configuration and export its artifacts")
    _add_config_flags(run)
    sw = sub.add_parser("sweep", help="run one configuration per value of an axis")
    _add_config_flags(sw)
    sw.add_argument("--axis", choices=SWEEP_AXES, required=True)
    sw.add_argument("--values", required=True, help="comma-separated values, e.g. 1,2,3")
    ver = sub.add_parser("verify", help="run the finite-difference and brute-force oracle suites")
    ver.add_argument("--suite", action="append", choices=("tape", "primitives", "sparse_solver", "tr_subproblem"),
                     help="restrict to a suite (repeatable)")
    return parser


def _config(args):
    overrides = {k: getattr(args, k) for k in ("problem", "optimizer", "seed", "grid", "depth", "width", "max_iters", "out")}
    if args.config:
        return load_config(args.config, **overrides)
    return config_from_mapping({}, **overrides)


def _print_run(res):
    s = res.spectrum
    print(f"{res.config.out}: stop_reason={res.history.stop_reason} final_loss={res.history.final_loss!r}")
    print(f"  spectrum (positive, zero, negative) = {s.counts} of {s.dim}, threshold {s.threshold:.3e}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        from .verify import run_all

        results = run_all(args.suite)
        return 0 if all(r.passed for r in results) else 1
    try:
        cfg = _config(args)
        if args.command == "sweep":
            values = [_parse_value(args.axis, v.strip()) for v in args.values.split(",") if v.strip()]
            if not values:
                raise ConfigError("values", "sweep needs at least one value")
    except ConfigError as exc:
        print(f"hesspcl: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"hesspcl: invalid configuration: values: {exc}", file=sys.stderr)
        return 2
    if args.command == "run":
        _print_run(execute(cfg))
        return 0
    try:
        text, results = sweep(cfg, args.axis, values)
    except ConfigError as exc:
        print(f"hesspcl: invalid configuration: {exc}", file=sys.stderr)
        return 2
    for res in results:
        if res is not None:
            _print_run(res)
    print(text, end="")
    return 0 if all(r is not None for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
