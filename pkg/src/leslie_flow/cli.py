"""``leslie-flow`` command-line entry point."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .harness import EXIT_CONFIG, run_experiment, write_summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leslie-flow",
        description="Simulate and audit compressible liquid-crystal flow on the 2-torus.",
    )
    parser.add_argument("config", type=Path, help="path to a key-value config file")
    parser.add_argument("--output-dir", type=Path, help="directory for series.csv and summary.json")
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. solver.dt=5e-4 (repeatable)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.output_dir is not None:
        overrides.append(f"run.output_dir={args.output_dir}")
    try:
        text = args.config.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        print(f"leslie-flow: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = parse_config(text, overrides)
    except ConfigError as exc:
        print(f"leslie-flow: invalid config {args.config}:\n{exc}", file=sys.stderr)
        if args.output_dir is not None:
            write_summary(args.output_dir / "summary.json", {
                "error": {"type": "ConfigError", "violations": exc.violations}, "exit_code": EXIT_CONFIG})
        return EXIT_CONFIG
    code = run_experiment(config)
    print(f"leslie-flow: {config.experiment} finished with exit code {code} ({config.output_dir})")
    return code


if __name__ == "__main__":
    sys.exit(main())
