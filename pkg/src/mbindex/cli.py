"""Command-line entry point: one subcommand per experiment kind plus `sweep`."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import yaml

from .experiments import KINDS, ConfigError, ExperimentConfig, load_config, run_experiment, sweep

log = logging.getLogger("mbindex")

EXIT_OK, EXIT_COMPUTE, EXIT_CONFIG, EXIT_CHECKS, EXIT_GATE = 0, 1, 2, 3, 4


def _load(args, kind=None) -> ExperimentConfig:
    cfg = load_config(args.config)
    if kind is not None and cfg.kind != kind:
        cfg = dataclasses.replace(cfg, kind=kind)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.output is not None:
        cfg = dataclasses.replace(cfg, output=args.output)
    return cfg


def _parse_values(text: str):
    vals = yaml.safe_load(f"[{text}]")
    if not vals:
        raise ConfigError("--values: empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mbindex", description="Many-body index experiments on lattice models.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="YAML experiment config")
        p.add_argument("-o", "--output", help="directory for result records")
        p.add_argument("--seed", type=int)
        p.add_argument("--strict", action="store_true", help="exit 3 when a quality check fails")

    for kind in KINDS:
        common(sub.add_parser(kind, help=f"run a {kind} experiment"))
    sw = sub.add_parser("sweep", help="run a config once per value of one field")
    common(sw)
    sw.add_argument("--axis", required=True, help="dotted config field, e.g. model.delta")
    sw.add_argument("--values", required=True, help="comma-separated values, e.g. 1,2,4")
    sw.add_argument("-j", "--workers", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "sweep":
            cfg = _load(args)
            records, table = sweep(cfg, args.axis, _parse_values(args.values), args.workers, cfg.output)
            sys.stdout.write(table)
            if any(r["status"] == "error" for r in records):
                return EXIT_COMPUTE
            if args.strict and not all(r["passed"] for r in records):
                return EXIT_CHECKS
            return EXIT_OK
        cfg = _load(args, args.command)
        record = run_experiment(cfg)
    except (ConfigError, FileNotFoundError, yaml.YAMLError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        log.exception("computation failed")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_COMPUTE
    print(json.dumps({k: record[k] for k in ("kind", "status", "error", "values", "checks", "passed")}, indent=2))
    if record["status"] == "gate-failed":
        return EXIT_GATE
    if args.strict and not record["passed"]:
        return EXIT_CHECKS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
