"""Command-line entry point.

Two subcommands:

  run    one experiment at a fixed configuration
  sweep  the same experiment repeated along one parameter axis

Flags mirror ExperimentConfig; a JSON config file may supply any of them,
with explicit flags taking precedence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields

from .errors import ParameterError
from .harness import (
    ExperimentConfig,
    emit,
    run_experiment,
    summary_row,
    sweep,
)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with defaults for any flag")
    p.add_argument("--query", choices=["count", "sum", "hist", "range"])
    p.add_argument(
        "--protocol", choices=["base", "susdp", "bsdp", "hsdp", "ohsdp"]
    )
    p.add_argument(
        "--base", choices=["dlap-count", "splitmix-sum", "perbin-hist"]
    )
    p.add_argument("--n", type=int)
    p.add_argument("--u", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", help="bottom group size or 'auto'")
    p.add_argument("--k", type=int)
    p.add_argument("--khat", dest="k_hat", type=int)
    p.add_argument(
        "--attack", choices=["none", "flood", "drop", "alter", "impersonate"]
    )
    p.add_argument("--attack-msgs", dest="attack_msgs", type=int)
    p.add_argument("--dist", choices=["unif", "zipf", "gauss"])
    p.add_argument("--data", help="CSV dataset path (overrides --dist)")
    p.add_argument("--col", help="CSV column name or index")
    p.add_argument("--cap", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file path")
    p.add_argument("--format", choices=["csv", "json"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shuffleguard",
        description="Shuffle-DP protocol simulator and experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment")
    _add_common_flags(run_p)
    sweep_p = sub.add_parser("sweep", help="sweep one parameter axis")
    _add_common_flags(sweep_p)
    sweep_p.add_argument(
        "--axis", choices=["lambda", "k", "eps", "n"], required=True
    )
    sweep_p.add_argument(
        "--values", required=True,
        help="comma-separated axis values, e.g. 8,16,32",
    )
    return parser


def _coerce_lam(v):
    if v is None or v == "auto":
        return v
    return int(v)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        with open(args.config) as fh:
            file_values = json.load(fh)
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = set(file_values) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for f in fields(ExperimentConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    if "lam" in values:
        values["lam"] = _coerce_lam(values["lam"])
    return ExperimentConfig(**values)


def _print_summaries(summaries) -> None:
    rows = [summary_row(s) for s in summaries]
    metric_cols = [
        "abs_error", "rel_error_pct", "msgs_per_user",
        "bits_per_msg", "detection_rate", "mean_wall_time_s",
    ]
    head = ["protocol", "query", "n", "lam", "k", "attack"] + metric_cols
    print("\t".join(head))
    for row in rows:
        cells = []
        for c in head:
            v = row[c]
            cells.append(f"{v:.6g}" if isinstance(v, float) else str(v))
        print("\t".join(cells))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        if args.command == "run":
            summaries = [run_experiment(config)]
        else:
            axis_values = [
                float(v) if args.axis == "eps" else int(v)
                for v in args.values.split(",")
            ]
            summaries = sweep(config, args.axis, axis_values)
    except (ParameterError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _print_summaries(summaries)
    if config.out:
        emit(summaries, config.format, config.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
