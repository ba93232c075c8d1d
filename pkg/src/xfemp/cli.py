"""Command-line entry point: run experiments from a YAML config file.

Exit codes: 0 on success, 1 when the run itself fails (every sweep point
failed, or the single solve did not converge), 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import yaml

from .experiments import (ConfigError, config_from_dict, run_bar_sweep,
                          run_circle_sweep, run_single_solve)
from .solver import SingularMatrixError


def _set_dotted(tree: dict, dotted: str, value):
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-mapping key {k!r}")
    node[keys[-1]] = value


def load_config(path: str, overrides=()) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        _set_dotted(raw, key, yaml.safe_load(text))
    return raw


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="xfemp",
        description="two-phase diffusion sweeps on non-conforming meshes")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("config", help="YAML experiment description")
    run.add_argument("--override", action="append", default=[],
                     metavar="KEY=VALUE",
                     help="override a (dotted) config key, repeatable")
    run.add_argument("--out", default=None, help="output path override")
    run.add_argument("--threads", type=int, default=None,
                     help="parallel sweep workers (output order is unchanged)")
    args = parser.parse_args(argv)

    try:
        raw = load_config(args.config, args.override)
        if args.threads is not None:
            raw["threads"] = args.threads
        cfg = config_from_dict(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if cfg.experiment == "bar_sweep":
            rows = run_bar_sweep(cfg, args.out)
            n_failed = sum(1 for r in rows if r["failed"] is True)
            print(f"wrote {len(rows)} rows to {args.out or cfg.output} "
                  f"({n_failed} flagged)")
            return 1 if n_failed == len(rows) else 0
        if cfg.experiment == "circle_sweep":
            rows = run_circle_sweep(cfg, args.out)
            # non-converged solver variants are data (the plots mark them);
            # only a failed scheme solve counts against the exit code
            n_failed = sum(1 for r in rows
                           if r["gmres_failed"] in ("direct", "scaling"))
            n_marked = sum(1 for r in rows if r["gmres_failed"])
            print(f"wrote {len(rows)} rows to {args.out or cfg.output} "
                  f"({n_marked} marked, {n_failed} failed)")
            return 1 if rows and n_failed == len(rows) else 0
        summary = run_single_solve(cfg, args.out)
        print(json.dumps(summary, indent=2, default=_json_float))
        return 0 if summary["converged"] else 1
    except SingularMatrixError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


def _json_float(value):
    if isinstance(value, float) and (math.isnan(value) or math.isinf(value)):
        return str(value)
    raise TypeError(f"not JSON serializable: {value!r}")


if __name__ == "__main__":
    sys.exit(main())
