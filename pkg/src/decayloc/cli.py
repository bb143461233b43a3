"""Command line entry point: one subcommand per experiment kind.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

import yaml

from .config import KINDS, ConfigError, ExperimentConfig, apply_override, parse_config
from .experiments import format_csv, run_experiment, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("decayloc")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decayloc",
        description="Anderson model with a decaying random potential: Monte Carlo experiments.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="KIND")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", metavar="PATH", help="YAML experiment file (kind is taken from the subcommand)")
        p.add_argument("--seed", type=int, metavar="U64", help="master seed")
        p.add_argument("--out", metavar="PATH", help="CSV output path (default: stdout)")
        p.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads")
        p.add_argument(
            "--override", action="append", default=[], metavar="KEY=VALUE",
            help="set a config field, e.g. model.alpha=0.3 or energies=[0.5,1.0]",
        )
        p.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    return parser


def _load_raw(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("--config", "top level must be a mapping")
    return data


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    data = _load_raw(args.config)
    if "kind" in data and data["kind"] != args.kind:
        raise ConfigError("kind", f"config says {data['kind']!r} but subcommand is {args.kind!r}")
    data["kind"] = args.kind
    for item in args.override:
        apply_override(data, item)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["output"] = args.out
    return parse_config(data)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        if args.threads < 1:
            raise ConfigError("--threads", f"must be >= 1, got {args.threads}")
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        sys.stdout.write(cfg.to_yaml())
        return EXIT_OK
    try:
        result = run_experiment(cfg, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if cfg.output:
        write_csv(result, cfg.output)
        log.info("wrote %d rows to %s", len(result.rows), cfg.output)
    else:
        sys.stdout.write(format_csv(result))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
