"""Command-line entry point.

Subcommands mirror the pipeline stages::

    mobequity synth      --config scenario.cfg
    mobequity validate   --config scenario.cfg
    mobequity staypoints --config scenario.cfg
    mobequity homes      --config scenario.cfg
    mobequity metrics    --config scenario.cfg
    mobequity report     --config scenario.cfg
    mobequity all        --config scenario.cfg --workers 4

Configuration comes from a flat key=value file; any key can be overridden
by a MOBEQUITY_<UPPER_KEY> environment variable, and --workers / --seed /
--output-dir override both.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import load_config
from .geo import MalformedWKTError
from .ingest import (
    DuplicateIdError,
    FileUnreadableError,
    MalformedRowError,
    MissingHeaderError,
)
from .pipeline import run_stage
from .synth import InvalidConfigError

_SUBCOMMANDS = ("validate", "staypoints", "homes", "metrics", "report", "synth", "all")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mobequity")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value configuration file")
        p.add_argument("--workers", type=int, default=None, help="device fan-out width")
        p.add_argument("--seed", type=int, default=None, help="generator seed (synth)")
        p.add_argument("--output-dir", default=None, help="override output_dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["synth_seed"] = args.seed
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    try:
        cfg = load_config(args.config, overrides=overrides)
        summary = run_stage(args.subcommand, cfg)
    except InvalidConfigError as exc:
        print(f"error: invalid-config: {exc}", file=sys.stderr)
        return 2
    except (MissingHeaderError, MalformedRowError, MalformedWKTError, DuplicateIdError) as exc:
        print(f"error: malformed-input: {exc}", file=sys.stderr)
        return 2
    except (FileUnreadableError, FileNotFoundError) as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
