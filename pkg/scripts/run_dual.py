#!/usr/bin/env python3
"""Full dual-agent experiment: train, evaluate, export trajectories, plot.

Usage: python scripts/run_dual.py [--seed N] [--out DIR]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from regmarl.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]


def run() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="runs/dual")
    args = parser.parse_args()

    out = Path(args.out)
    train_args = ["train", "--config", str(ROOT / "configs" / "dual.toml"), "--out", str(out)]
    if args.seed is not None:
        train_args += ["--seed", str(args.seed)]
    if cli(train_args) != 0:
        return 1
    checkpoint = out / "checkpoint.json"
    for step in (
        ["eval", "--checkpoint", str(checkpoint), "--episodes", "100", "--seed", "0"],
        ["export", "--checkpoint", str(checkpoint), "--episodes", "4",
         "--out", str(out / "trajectories.csv"), "--seed", "0"],
        ["plot", "--metrics", str(out / "metrics.csv"),
         "--trajectories", str(out / "trajectories.csv"), "--out", str(out / "plots")],
    ):
        if cli(step) != 0:
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(run())
