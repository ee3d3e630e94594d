"""Command line entry point.

Usage: hydrolim <experiment> --config path.json [--seed u64] [--out dir]

The experiment name must match the "experiment" field in the config. Exit
code 0 iff every check in the summary passed.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import EXPERIMENTS, run


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="hydrolim",
        description="Numerical scaling experiments for conservative lattice "
        "dynamics and their diffusion limit.",
    )
    parser.add_argument("experiment", help="one of: " + ", ".join(sorted(EXPERIMENTS)))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
    parser.add_argument("--out", default=".", help="output directory")
    args = parser.parse_args(argv)

    if args.experiment not in EXPERIMENTS:
        print(
            f"unknown experiment {args.experiment!r}; valid names: "
            + ", ".join(sorted(EXPERIMENTS)),
            file=sys.stderr,
        )
        return 2
    with open(args.config) as f:
        config = json.load(f)
    if config.get("experiment") != args.experiment:
        print(
            f"config declares experiment {config.get('experiment')!r}, "
            f"command line says {args.experiment!r}",
            file=sys.stderr,
        )
        return 2
    code, summary = run(config, out_dir=args.out, seed=args.seed)
    status = "PASS" if summary["pass"] else "FAIL"
    print(f"{args.experiment}: {status}")
    for c in summary["checks"]:
        mark = "ok" if c["passed"] else "FAIL"
        print(f"  [{mark}] {c['name']}: observed {c['observed']} (expected {c['expected']})")
    return code


if __name__ == "__main__":
    sys.exit(main())
