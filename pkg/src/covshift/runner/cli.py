"""Command-line entry point: ``covshift <subcommand> [--config PATH] ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from ..exceptions import ConfigError, CovshiftError
from . import experiments
from .config import SCHEMA_VERSION, ExperimentConfig, default_config

log = logging.getLogger("covshift")

COMMANDS = {
    "replicate": experiments.run_replication,
    "prior-shift": experiments.run_prior_shift,
    "concept-shift": experiments.run_concept_shift,
    "synthetic": experiments.run_synthetic_benchmark,
    "ratios": experiments.run_ratios,
    "explain": experiments.run_explain,
}


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covshift", description="Density-ratio covariate-shift experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config (defaults if omitted)")
        p.add_argument("--seed", type=_u64, help="master seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--interval", choices=("bootstrap", "seeds"), help="interval mode (overrides config)")
        p.add_argument("--threads", type=_positive, help="worker threads (overrides config)")
    sub.add_parser("default-config", help="print the default config as JSON")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else default_config()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.interval is not None:
        overrides["interval"] = {"mode": args.interval}
    if args.threads is not None:
        overrides["threads"] = args.threads
    return cfg.override(**overrides) if overrides else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "default-config":
        print(json.dumps({**default_config().to_dict(), "schema_version": SCHEMA_VERSION}, indent=2))
        return 0
    try:
        cfg = resolve_config(args)
        log.info("running %s into %s", args.command, cfg["output_dir"])
        COMMANDS[args.command](cfg)
    except CovshiftError as e:
        print(f"covshift: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
