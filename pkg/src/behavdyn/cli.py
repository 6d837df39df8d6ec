"""Command-line entry point: ``behavdyn <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys

from .harness.config import COMMANDS, ConfigError, parse_config
from .harness.runner import EXIT_CONFIG, EXIT_IO, EXIT_OK, RunError, run_command


def build_parser():
    parser = argparse.ArgumentParser(
        prog="behavdyn",
        description="Seeded simulations of flocking, coordination dynamics and chaos.",
    )
    parser.add_argument("command", choices=COMMANDS, help="what to run")
    parser.add_argument("--config", metavar="FILE",
                        help="JSON config (a manifest.json from an earlier run also works)")
    parser.add_argument("--seed", type=int, help="64-bit unsigned root seed")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--format", choices=("csv", "json", "dat"),
                        help="table format (dat: whitespace table for plotting)")
    parser.add_argument("--jobs", type=int, help="worker processes for sweeps")
    return parser


def _load_document(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc}") from None
    if isinstance(doc, dict) and "outputs" in doc and "config" in doc:
        doc = doc["config"]  # replay the config snapshot of a manifest
    return doc


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        doc = _load_document(args.config) if args.config else {}
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        doc = dict(doc)
        doc["command"] = args.command
        for key, value in (("seed", args.seed), ("output_dir", args.out),
                           ("format", args.format), ("jobs", args.jobs)):
            if value is not None:
                doc[key] = value
        cfg = parse_config(doc)
    except ConfigError as exc:
        print(f"behavdyn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"behavdyn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        manifest = run_command(cfg)
    except RunError as exc:
        print(f"behavdyn: {exc.category} error: {exc}", file=sys.stderr)
        return exc.exit_code
    for o in manifest.outputs:
        print(f"{o['sha256']}  {o['path']}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
