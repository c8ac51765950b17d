"""Command line entry point: ``fvlab <experiment> --config FILE [options]``.

Exit status: 0 when every verdict passes, 1 when any fails, 2 on a
configuration error.
"""
from __future__ import annotations

import argparse
import os
import sys

from .config import EXPERIMENTS, load_config
from .errors import ConfigError, FVLabError
from .harness import run_experiment


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fvlab", description="Moran / Fleming-Viot duality laboratory")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="YAML experiment config")
        s.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
        s.add_argument("--replicates", type=int, help="replicate count (overrides the config)")
        s.add_argument("--out", help="write the report here instead of stdout")
        s.add_argument("--format", choices=("json", "csv"), default="json")
        s.add_argument("--workers", type=int, default=1, help="replicate worker threads")
        s.add_argument("--no-timing", action="store_true", help="omit wall time from the report")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = load_config(args.config)
        if cfg["experiment"] != args.command:
            raise ConfigError(f"config is for {cfg['experiment']!r}, not {args.command!r}")
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.replicates is not None:
            cfg["replicates"] = args.replicates
        cfg["workers"] = args.workers
        report = run_experiment(cfg)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FVLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = report.render(args.format, include_timing=not args.no_timing)
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for line in report.summary_lines():
        print(line, file=sys.stderr)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
