"""Command-line front end.

Verbs:
  run     execute an experiment config and write CSVs
  gen     emit a default config for a named experiment
  verify  run the built-in invariant and diagnostic suites

The environment variable ZOCONEX_SEED overrides the config seed.
"""

from __future__ import annotations

import argparse
import os
import sys

import yaml

from .experiments import ConfigError, load_config, run_experiment
from .verify import run_verification

_GEN_TEMPLATES = {
    "qcqp-convex": {
        "family": "qcqp-convex",
        "n": 20,
        "m": 3,
        "T": 20000,
        "trials": 20,
        "master_seed": 20260810,
        "shared_instance": False,
        "noise": {"kind": "gaussian", "sigma": 0.1, "common": True},
        "smoothing": {"mode": "theorem1"},
        "schedule": {"mode": "explicit", "eta": 600.0, "tau": 400.0},
        "output": {"prefix": "qcqp-convex"},
    },
    "qcqp-nonconvex": {
        "family": "qcqp-nonconvex",
        "n": 10,
        "m": 2,
        "T": 2000,
        "K": 20,
        "trials": 20,
        "master_seed": 20260810,
        "shared_instance": False,
        "noise": {"kind": "none"},
        "smoothing": {"mode": "theorem1"},
        "schedule": {"mode": "explicit", "eta": 200.0, "tau": 150.0},
        "output": {"prefix": "qcqp-nonconvex"},
    },
    "smoothing-sweep": {
        "family": "qcqp-convex",
        "n": 20,
        "m": 1,
        "T": 10000,
        "trials": 10,
        "master_seed": 20260810,
        "shared_instance": True,
        "noise": {"kind": "gaussian", "sigma": 0.1, "common": True},
        "smoothing": {"sweep": [0.05, 0.1, 2.0]},
        "schedule": {"mode": "explicit", "eta": 450.0, "tau": 300.0},
        "output": {"prefix": "smoothing-sweep"},
    },
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="zoconex",
        description="Zeroth-order solver for stochastically constrained problems",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True, help="path to a YAML config")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel trials")
    p_run.add_argument("--seed", type=int, default=None, help="master seed override")

    p_gen = sub.add_parser("gen", help="emit a default experiment config")
    p_gen.add_argument("name", choices=sorted(_GEN_TEMPLATES))
    p_gen.add_argument("--out", default=None, help="file path (default: stdout)")

    p_verify = sub.add_parser("verify", help="run invariant/diagnostic suites")
    p_verify.add_argument("--seed", type=int, default=7, help="seed for the checks")

    args = parser.parse_args(argv)

    if args.verb == "gen":
        text = yaml.safe_dump(_GEN_TEMPLATES[args.name], sort_keys=False)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
            print(f"wrote {args.out}")
        else:
            sys.stdout.write(text)
        return 0

    if args.verb == "verify":
        ok = run_verification(seed=args.seed, printer=print)
        return 0 if ok else 1

    # run
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["master_seed"] = int(args.seed)
    try:
        result = run_experiment(cfg, args.out, jobs=max(1, args.jobs))
    except (RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in result.trace_paths + result.summary_paths:
        print(f"wrote {path}")
    print(f"wrote {os.path.join(args.out, 'config_resolved.yaml')}")
    return 0 if result.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
