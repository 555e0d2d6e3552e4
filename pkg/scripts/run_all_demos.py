"""Run every subcommand that applies to each built-in demo into ``results/``.

Usage: python scripts/run_all_demos.py [--jobs N] [--out DIR]
"""
import argparse
import sys

from psentropy.cli import main
from psentropy.demos import list_demos

COMMANDS = {
    "linear-1d": ["bounds", "entropy", "fb-entropy", "check42", "verify", "simulate"],
    "linear-2d": ["bounds", "entropy", "fb-entropy", "check42", "simulate"],
    "quadratic-5.2": ["synth", "verify", "sweep", "bounds", "entropy", "fb-entropy", "check42"],
    "cubic-5.3": ["synth", "verify", "sweep", "bounds", "entropy"],
    "chain-5.4": ["verify", "bounds", "entropy", "simulate"],
}

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    failed = []
    for name in list_demos():
        for cmd in COMMANDS.get(name, ["bounds"]):
            if main([cmd, "--demo", name, "--jobs", str(args.jobs), "--out", f"{args.out}/{name}"]) != 0:
                failed.append(f"{cmd}:{name}")
    if failed:
        print("failed:", ", ".join(failed))
    sys.exit(1 if failed else 0)
