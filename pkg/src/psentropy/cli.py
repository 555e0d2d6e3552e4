"""Command-line entry point: ``psentropy <command> (--config PATH | --demo NAME)``.

Exit status: 0 on success, 1 when a run fails (infeasible cover, failed
synthesis or verification, failed comparison), 2 on a bad configuration.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys

from .config import ConfigError, load_config
from .demos import list_demos, load_demo
from .experiment import (
    emit_report,
    prepare,
    run_bounds,
    run_check42,
    run_entropy,
    run_fb_entropy,
    run_simulate,
    run_sweep,
    run_synth,
    run_verify,
)

RUNNERS = {
    "simulate": lambda st, jobs: run_simulate(st),
    "entropy": run_entropy,
    "bounds": lambda st, jobs: run_bounds(st),
    "fb-entropy": run_fb_entropy,
    "synth": lambda st, jobs: run_synth(st),
    "verify": lambda st, jobs: run_verify(st),
    "sweep": lambda st, jobs: run_sweep(st),
    "check42": run_check42,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="psentropy", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", metavar="PATH")
        src.add_argument("--demo", metavar="NAME")
        p.add_argument("--out", metavar="DIR", default=None, help="output directory (default: results/<name>)")
        p.add_argument("--jobs", type=int, default=1, metavar="N")
    sub.add_parser("list-demos")
    p = sub.add_parser("plot-data", help="two-column data from a CSV artifact")
    p.add_argument("--input", required=True, metavar="CSV")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--log-x", action="store_true")
    p.add_argument("--log-y", action="store_true")
    p.add_argument("--out", metavar="PATH", default=None)
    return ap


def plot_data(path, x, y, log_x=False, log_y=False) -> str:
    """Space-separated ``x y`` lines (optionally ``log|.|``) from two CSV columns.

    Rows with a zero under a requested logarithm are dropped.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if rows and (x not in rows[0] or y not in rows[0]):
        raise ValueError(f"columns {x!r} and {y!r} must be in {list(rows[0])}")
    lines = [f"# {'log|' + x + '|' if log_x else x} {'log|' + y + '|' if log_y else y}"]
    for r in rows:
        vx, vy = float(r[x]), float(r[y])
        if (log_x and vx == 0) or (log_y and vy == 0):
            continue
        vx = math.log(abs(vx)) if log_x else vx
        vy = math.log(abs(vy)) if log_y else vy
        lines.append(f"{vx!r} {vy!r}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-demos":
        print("\n".join(list_demos()))
        return 0
    if args.command == "plot-data":
        try:
            text = plot_data(args.input, args.x, args.y, args.log_x, args.log_y)
        except (OSError, ValueError) as err:
            print(f"error: plot-data: {err}", file=sys.stderr)
            return 1
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config) if args.config else load_demo(args.demo)
    except (ConfigError, KeyError, OSError) as err:
        print(f"error: config: {err}", file=sys.stderr)
        return 2
    out = args.out or f"results/{cfg.name}"
    try:
        st = prepare(cfg)
        report = RUNNERS[args.command](st, args.jobs)
    except Exception as err:  # surface module errors with context, never a traceback
        print(f"error: {args.command} on {cfg.name}: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    emit_report(report, out)
    print(report.summary)
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
