"""Command-line entry point: ``waveinv <command> --config file.json``.

Exit codes: 0 when every gate passed, 1 when a numerical gate failed,
2 for configuration or input errors.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, load_config
from .errors import ConfigurationError, ParameterError, PreconditionError
from .experiments import run

EXIT_OK, EXIT_GATE, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="waveinv", description="Discrete wave inverse-problem experiments.")
    ap.add_argument("command", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    ap.add_argument("--seed", type=int, default=None, help="64-bit seed (overrides the config)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweep cells")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.jobs < 1:
        print("error: --jobs must be ≥ 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.command, seed=args.seed, output_dir=args.out)
        outcome = run(cfg, jobs=args.jobs)
    except (ConfigurationError, ParameterError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outcome.report()
    for path in outcome.files:
        print(f"wrote {path}")
    return EXIT_OK if outcome.passed else EXIT_GATE


if __name__ == "__main__":
    sys.exit(main())
