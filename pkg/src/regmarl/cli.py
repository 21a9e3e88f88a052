"""Command-line entry point: train / eval / export / plot / gradcheck.

Log verbosity is controlled by the REGMARL_LOG environment variable
(off / info / debug; default off).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import harness, maddpg, numcore, svgplot
from .config import ConfigError, load_config, with_overrides

GRAD_TOLERANCE = 1e-4


def _setup_logging() -> None:
    level_name = os.environ.get("REGMARL_LOG", "off").lower()
    logger = logging.getLogger("regmarl")
    if level_name == "off":
        logger.addHandler(logging.NullHandler())
        logger.setLevel(logging.CRITICAL + 1)
        return
    levels = {"info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        print(f"warning: unknown REGMARL_LOG value {level_name!r}", file=sys.stderr)
        return
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(levels[level_name])


def _train_one(args: tuple) -> tuple[str, str]:
    cfg, = args
    checkpoint, metrics = harness.run_training(cfg)
    return str(checkpoint), str(metrics)


def _cmd_train(ns: argparse.Namespace) -> int:
    cfg = load_config(ns.config)
    if ns.seeds:
        seeds = [int(s) for s in ns.seeds.split(",") if s.strip()]
        if not seeds:
            raise ConfigError("--seeds needs at least one integer")
        out_root = Path(ns.out) if ns.out else Path(cfg.out_dir)
        configs = [
            (with_overrides(cfg, seed=s, out_dir=str(out_root / f"seed{s}")),)
            for s in seeds
        ]
        workers = min(len(configs), os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for checkpoint, metrics in pool.map(_train_one, configs):
                print(f"{checkpoint} {metrics}")
        return 0
    cfg = with_overrides(cfg, seed=ns.seed, out_dir=ns.out)
    checkpoint, metrics = harness.run_training(cfg)
    print(f"{checkpoint} {metrics}")
    return 0


def _cmd_eval(ns: argparse.Namespace) -> int:
    ckpt = harness.load_checkpoint(ns.checkpoint)
    rng = np.random.default_rng(ns.seed)
    report = harness.evaluate(ckpt.agents, ns.episodes, rng, ckpt.config.grid_size)
    for k in range(len(ckpt.agents)):
        freq = ", ".join(f"{v:.4f}" for v in report.action_freqs[k])
        print(
            f"agent {k}: mean_return {report.mean_returns[k]:.4f} "
            f"success_rate {report.success_rates[k]:.4f} "
            f"action_freq [{freq}] mean_length {report.mean_lengths[k]:.2f}"
        )
    return 0


def _cmd_export(ns: argparse.Namespace) -> int:
    ckpt = harness.load_checkpoint(ns.checkpoint)
    rng = np.random.default_rng(ns.seed)
    path = harness.export_trajectories(
        ckpt.agents, ns.episodes, rng, ns.out, ckpt.config.grid_size
    )
    print(str(path))
    return 0


def _cmd_plot(ns: argparse.Namespace) -> int:
    written = svgplot.render_plots(ns.metrics, ns.trajectories, ns.out)
    for path in written:
        print(str(path))
    return 0


def _cmd_gradcheck(ns: argparse.Namespace) -> int:
    errors = harness.run_gradient_checks(seed=ns.seed, cases=ns.cases)
    worst = max(errors.values())
    for name, err in errors.items():
        print(f"{name}: max relative error {err:.3e}")
    if worst >= GRAD_TOLERANCE:
        print(f"FAIL: worst error {worst:.3e} >= {GRAD_TOLERANCE:.0e}", file=sys.stderr)
        return 1
    print(f"OK: worst error {worst:.3e} < {GRAD_TOLERANCE:.0e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regmarl",
        description="Train and inspect action-regularized multi-agent policies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training experiment")
    p_train.add_argument("--config", required=True, help="TOML config path")
    p_train.add_argument("--seed", type=int, default=None, help="override config seed")
    p_train.add_argument("--out", default=None, help="override output directory")
    p_train.add_argument(
        "--seeds", default=None,
        help="comma-separated seeds; runs one replica per seed under OUT/seed<N>",
    )
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint noise-free")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, required=True)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.set_defaults(func=_cmd_eval)

    p_export = sub.add_parser("export", help="export greedy trajectories as CSV")
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--episodes", type=int, required=True)
    p_export.add_argument("--out", required=True, help="CSV output path")
    p_export.add_argument("--seed", type=int, default=0)
    p_export.set_defaults(func=_cmd_export)

    p_plot = sub.add_parser("plot", help="render SVG plots from CSV files")
    p_plot.add_argument("--metrics", required=True)
    p_plot.add_argument("--trajectories", default=None)
    p_plot.add_argument("--out", required=True, help="output directory")
    p_plot.set_defaults(func=_cmd_plot)

    p_grad = sub.add_parser(
        "gradcheck", help="finite-difference verification of all analytic gradients"
    )
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--cases", type=int, default=100)
    p_grad.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except (ConfigError, svgplot.CsvFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
