"""Command-line entry point.

``toposkill run CONFIG --out DIR [--set section.key=value ...]`` executes the
recipe named in the config. ``toposkill init-config RECIPE`` prints a fully
populated config for editing. Exit codes: 0 success, 2 configuration error,
3 numerical abort.
"""

from __future__ import annotations

import argparse
import sys

from .config import (RECIPES, apply_overrides, dump_config, load_config_file,
                     profile_config)
from .errors import ConfigError, NumericalAbort
from .recipes import run_recipe


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toposkill")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a recipe from a config file")
    run.add_argument("config", help="path to a JSON config")
    run.add_argument("--out", default="runs/latest", help="run directory")
    run.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="SECTION.KEY=VALUE", help="override a config key")

    init = sub.add_parser("init-config", help="print a recipe's default config")
    init.add_argument("recipe", choices=RECIPES)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "init-config":
        print(dump_config(profile_config(args.recipe)))
        return 0
    try:
        cfg = load_config_file(args.config)
        cfg = apply_overrides(cfg, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        summary = run_recipe(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalAbort as exc:
        print(f"numerical abort: {exc} (state dumped to {args.out})",
              file=sys.stderr)
        return 3
    for key in sorted(summary):
        print(f"{key}: {summary[key]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
