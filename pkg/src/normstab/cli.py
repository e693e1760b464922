"""Command-line entry point: ``normstab <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import DataError, NumericalError, SeedSpec, load_csv
from .experiments import (
    ConfigError,
    config_from_dict,
    chance_curve,
    emit_instability_path,
    fmt,
    jump_path_experiment,
    load_config,
    run_convergence,
    run_methods,
    run_table_experiment,
    write_csv,
    write_json,
)
from .scenarios import generate, preset

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file; flags override its keys")
    p.add_argument("--scenario", help="named scenario (comma-list for table)")
    p.add_argument("--data", help="CSV data file (numeric, no header)")
    p.add_argument("--k-min", type=int, dest="k_min")
    p.add_argument("--k-max", type=int, dest="k_max")
    p.add_argument("--bootstraps", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--methods", help="comma-separated method names")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "json", "both"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="normstab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("table", "selection histograms over repeated simulations"),
        ("path", "instability paths for one dataset"),
        ("chance-curve", "chance distance for random cluster sizes"),
        ("jump-paths", "per-iteration jump-statistic paths"),
        ("converge", "running-mean instability against the number of bootstrap pairs"),
        ("select", "estimate k on a user dataset with every method"),
    ]:
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "chance-curve":
            p.add_argument("--objects", type=int, default=100, help="objects per draw (m)")
            p.add_argument("--draws", type=int, default=1000)
        if name == "converge":
            p.add_argument("--k", type=int, default=3)
            p.add_argument("--b-max", type=int, default=5000, dest="b_max")
    return parser


def resolve_config(args: argparse.Namespace):
    raw = load_config(args.config) if args.config else {}
    for key in ("data", "k_min", "k_max", "bootstraps", "iterations", "methods", "seed", "workers", "out", "format"):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if args.scenario is not None:
        raw["scenarios"] = args.scenario
    if args.data is not None and args.scenario is None:
        raw["scenarios"] = []
    return config_from_dict(raw)


def _dataset(config):
    """User data if given, else the first scenario drawn with the run seed."""
    if config.data is not None:
        return load_csv(config.data)
    if not config.scenarios:
        raise ConfigError("need --scenario or --data")
    return generate(preset(config.scenarios[0], SeedSpec(config.seed))).data


def _run(args) -> int:
    config = resolve_config(args)
    out = Path(config.out)
    cmd = args.command
    if cmd == "table":
        table = run_table_experiment(config)
        for row in table.rows():
            print(",".join(fmt(v) for v in row))
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    if cmd == "path":
        emit_instability_path(_dataset(config), config, out / "paths.csv")
    elif cmd == "chance-curve":
        chance_curve(config.k_max, args.objects, args.draws, SeedSpec(config.seed), out / "chance_curve.csv")
    elif cmd == "jump-paths":
        if not config.scenarios:
            raise ConfigError("jump-paths needs --scenario")
        jump_path_experiment(config.scenarios[0], config.iterations, config.k_max, config, out / "jump_paths.csv")
    elif cmd == "converge":
        run_convergence(_dataset(config), args.k, args.b_max, config, out / "convergence.csv")
    elif cmd == "select":
        records = run_methods(_dataset(config), config, SeedSpec(config.seed))
        rows = [[r["method"], r["k_hat"], r["error"] or ""] for r in records]
        if config.format in ("csv", "both"):
            write_csv(out / "select.csv", ["method", "k_hat", "error"], rows)
        if config.format in ("json", "both"):
            write_json(out / "select.json", {"config": config.as_dict(), "selections": records})
        for row in rows:
            print(",".join(fmt(v) for v in row))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
