"""Run every shipped TOML config through the CLI, writing into results/."""
import argparse
import sys
from pathlib import Path

from levy_lab.cli import COMMANDS, main
from levy_lab.config import load_config

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(ROOT / "results"))
    ap.add_argument("configs", nargs="*", help="config files (default: configs/*.toml)")
    args = ap.parse_args()
    paths = [Path(c) for c in args.configs] or sorted((ROOT / "configs").glob("*.toml"))
    command = {exp: cmd for cmd, exp in COMMANDS.items()}
    codes = {}
    for path in paths:
        cfg = load_config(path)
        codes[path.name] = main([command[cfg.experiment], "--config", str(path), "--out", str(Path(args.out) / path.stem)])
        print(f"{path.name}: exit {codes[path.name]}", file=sys.stderr)
    sys.exit(1 if any(c == 1 for c in codes.values()) else 0)
