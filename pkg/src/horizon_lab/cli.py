"""Batch command-line front end.

    horizon-lab <kind> <config.yaml> [--seed N] [--out DIR] [--jobs N]
    horizon-lab summarize <run_dir>

Exit codes: 0 success, 2 invalid config/input, 3 resource-limit breach,
4 run-directory integrity error, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import EXPERIMENT_KINDS, load_config
from .errors import IntegrityError, InvalidInputError, ResourceLimitError
from .experiments import run_experiment, summarize

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_INVALID = 2
EXIT_RESOURCE = 3
EXIT_INTEGRITY = 4


def default_jobs() -> int:
    env = os.environ.get("HORIZON_LAB_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="horizon-lab",
        description="Run long-horizon stability experiments from a config file.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("config", help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, help="output directory (default: run-<kind>-<seed>)")
        p.add_argument(
            "--jobs",
            type=int,
            default=None,
            help="worker count (default: HORIZON_LAB_JOBS or 1; 'auto' = cpu count)",
        )
    s = sub.add_parser("summarize", help="report a finished run directory")
    s.add_argument("run_dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "summarize":
            print(summarize(args.run_dir))
            return EXIT_OK
        config = load_config(args.config, kind=args.command, seed_override=args.seed)
        jobs = args.jobs if args.jobs is not None else default_jobs()
        out_dir = args.out or f"run-{config.kind}-{config.master_seed}"
        manifest = run_experiment(config, out_dir, jobs=jobs)
        print(f"wrote {len(manifest['files'])} files to {out_dir}")
        for name in sorted(manifest["files"]):
            print(f"  {name}  sha256:{manifest['files'][name]['sha256'][:12]}")
        return EXIT_OK
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except InvalidInputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # pragma: no cover - safety net
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    raise SystemExit(main())
