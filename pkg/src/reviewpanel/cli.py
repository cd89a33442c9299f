"""Command-line entry point: ``reviewpanel <command> [options]``.

Commands run one pipeline stage each (ingest, summary, features, panel,
regress, tables) or produce synthetic data (synth, mc).  Settings come from a
flat ``key = value`` file (``--config``) with ``--set key=value`` overrides.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import ConfigError, load_config
from .ingest import IngestError
from .linalg import EstimationError
from .sentiment import LexiconError

COMMANDS = {
    "ingest": (pipeline.stage_ingest, "parse, validate and deduplicate review dumps into the clean store"),
    "summary": (pipeline.stage_summary, "review/product/firm counts, overall and per sector"),
    "features": (pipeline.stage_features, "firm-week sentiment and star features for eligible firms"),
    "panel": (pipeline.stage_panel, "weekly controls joined with features into the regression panel"),
    "regress": (pipeline.stage_regress, "estimate one configured specification"),
    "tables": (pipeline.stage_tables, "run every table analogue; CSV per table plus a Markdown report"),
    "synth": (pipeline.stage_synth, "write a synthetic input bundle with known ground truth"),
    "mc": (pipeline.stage_mc, "Monte Carlo study of an estimator on a known DGP"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--out-dir", help="output directory (overrides the config)")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    parser = argparse.ArgumentParser(prog="reviewpanel", description="Review sentiment panel pipeline and estimators.", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, help=help_text, parents=[common])
    return parser


def _overrides(args) -> dict[str, str]:
    pairs = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    if args.seed is not None:
        pairs["seed"] = str(args.seed)
    if args.out_dir is not None:
        pairs["out_dir"] = args.out_dir
    return pairs


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, _overrides(args))
        stage, _ = COMMANDS[args.command]
        stage(cfg)
    except (FileNotFoundError, IngestError, LexiconError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EstimationError, ValueError, KeyError) as exc:
        print(f"error: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
