"""``levy-lab`` command line.

Exit codes: 0 completed, 2 completed with an Inconclusive verdict, 1 error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .campaigns import run
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config, measure_spec_from_path
from .measures import DomainError

COMMANDS = {
    "check": "check",
    "simulate": "simulate",
    "verify-novikov": "novikov",
    "verify-umd": "umd",
    "gamma-norm": "gamma-norm",
    "converge": "convergence",
    "criteria-matrix": "criteria-matrix",
}


def _schedule(text: str):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad schedule {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levy-lab", description="Levy-measure checks and simulations.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="TOML experiment config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path, help="output directory, or a .json/.csv file path")
        sp.add_argument("--measure", type=Path, help="measure JSON file (overrides [measure])")
        sp.add_argument("--p", type=float)
        sp.add_argument("--t", type=float)
        sp.add_argument("--mode", choices=("sharp", "sufficient"))
        sp.add_argument("--schedule", type=_schedule, help="comma-separated, strictly decreasing")
        sp.add_argument("--reps", type=int)
        sp.add_argument("--reps-outer", type=int)
        sp.add_argument("--n-gauss", type=int)
        sp.add_argument("--cells", type=int)
    return parser


def resolve_config(args) -> ExperimentConfig:
    experiment = COMMANDS[args.command]
    if args.config is not None:
        cfg = load_config(args.config)
        cfg = cfg.replace(experiment=experiment)
    else:
        if args.seed is None:
            raise ConfigError("a seed is required (--seed or a config file)")
        cfg = config_from_dict({"experiment": experiment, "seed": args.seed})
    return cfg.replace(
        seed=args.seed,
        measure=None if args.measure is None else measure_spec_from_path(args.measure),
        p=args.p,
        t=args.t,
        mode=args.mode,
        schedule=args.schedule,
        reps=args.reps,
        reps_outer=args.reps_outer,
        n_gauss=args.n_gauss,
        cells=args.cells,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        rec = run(cfg)
        out = args.out if args.out is not None else Path(cfg.output_dir)
        csv_path, json_path = rec.write(out)
    except (ConfigError, DomainError, OSError, ValueError) as exc:
        print(f"levy-lab: error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"experiment": rec.experiment, "verdicts": rec.verdicts, "csv": str(csv_path),
                      "json": str(json_path), "config_hash": rec.config_hash}, sort_keys=True))
    return 2 if rec.inconclusive else 0


if __name__ == "__main__":
    sys.exit(main())
