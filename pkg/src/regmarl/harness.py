"""Experiment orchestration: training loop, evaluation, checkpoints, exports.

Everything here is deterministic per (config, seed): the trainer derives
independent random streams for initialization, environment resets,
exploration noise, batch sampling, and periodic evaluation from the single
config seed, and metrics are written with round-trip float formatting so two
identical runs produce byte-identical files.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import gridnav, maddpg, numcore
from .config import ExperimentConfig, config_from_dict, config_to_dict
from .maddpg import AgentRuntime, Trainer, build_agent_specs
from .svgplot import METRICS_COLUMNS, TRAJECTORY_COLUMNS

log = logging.getLogger("regmarl.harness")

CHECKPOINT_VERSION = 1


def _fmt(value) -> str:
    """CSV cell: shortest round-trip float repr; empty for missing."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def greedy_action(agent: AgentRuntime, obs: np.ndarray) -> int:
    """Noise-free action choice: argmax of the actor output."""
    out, _ = numcore.forward(agent.actor, np.asarray(obs, float).reshape(1, -1))
    return int(np.argmax(out[0]))


@dataclass
class EvalReport:
    """Noise-free rollout aggregates; frozen post-arrival steps are excluded
    from lengths and action frequencies."""

    episodes: int
    mean_returns: list[float]
    success_rates: list[float]
    action_freqs: list[np.ndarray]
    mean_lengths: list[float]


def evaluate(
    agents: Sequence[AgentRuntime],
    episodes: int,
    rng: np.random.Generator,
    grid_size: int = gridnav.DEFAULT_GRID_SIZE,
) -> EvalReport:
    """Run greedy episodes on fresh random destinations and aggregate."""
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    n = len(agents)
    returns = np.zeros((episodes, n))
    lengths = np.zeros((episodes, n))
    success = np.zeros((episodes, n))
    counts = [np.zeros(ag.spec.action_count) for ag in agents]
    for ep in range(episodes):
        state, obs = gridnav.reset(n, rng, grid_size)
        while not gridnav.is_done(state):
            active = [not a.reached for a in state.agents]
            ids = [greedy_action(agents[k], obs[k]) for k in range(n)]
            state, obs, rewards, _ = gridnav.step(state, ids)
            for k in range(n):
                if active[k]:
                    returns[ep, k] += rewards[k]
                    lengths[ep, k] += 1
                    counts[k][ids[k]] += 1
        for k in range(n):
            success[ep, k] = float(state.agents[k].reached)
    return EvalReport(
        episodes=episodes,
        mean_returns=[float(v) for v in returns.mean(axis=0)],
        success_rates=[float(v) for v in success.mean(axis=0)],
        action_freqs=[c / c.sum() if c.sum() > 0 else c for c in counts],
        mean_lengths=[float(v) for v in lengths.mean(axis=0)],
    )


def export_trajectories(
    agents: Sequence[AgentRuntime],
    episodes: int,
    rng: np.random.Generator,
    path: str | Path,
    grid_size: int = gridnav.DEFAULT_GRID_SIZE,
) -> Path:
    """Write greedy-policy rollouts as trajectory CSV rows (one per active
    agent-step, positions after the move)."""
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    n = len(agents)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for ep in range(episodes):
        state, obs = gridnav.reset(n, rng, grid_size)
        step_no = 0
        while not gridnav.is_done(state):
            step_no += 1
            active = [not a.reached for a in state.agents]
            ids = [greedy_action(agents[k], obs[k]) for k in range(n)]
            state, obs, rewards, _ = gridnav.step(state, ids)
            for k in range(n):
                if not active[k]:
                    continue
                ag = state.agents[k]
                lines.append(
                    ",".join(
                        (
                            str(ep),
                            str(step_no),
                            str(k),
                            str(ag.position[0]),
                            str(ag.position[1]),
                            ag.heading.name[0],
                            gridnav.Action(ids[k]).name.lower(),
                            repr(float(rewards[k])),
                            str(ag.destination[0]),
                            str(ag.destination[1]),
                        )
                    )
                )
    path.write_text("\n".join(lines) + "\n")
    return path


def _network_to_dict(net: numcore.Mlp) -> dict:
    return {
        "layer_sizes": list(net.layer_sizes),
        "output_activation": net.output_activation,
        "weights": [_encode_array(w) for w in net.weights],
        "biases": [_encode_array(b) for b in net.biases],
    }


def _network_from_dict(doc: dict) -> numcore.Mlp:
    sizes = tuple(int(s) for s in doc["layer_sizes"])
    weights = [
        _decode_array(blob, (sizes[k + 1], sizes[k]))
        for k, blob in enumerate(doc["weights"])
    ]
    biases = [
        _decode_array(blob, (sizes[k + 1],)) for k, blob in enumerate(doc["biases"])
    ]
    return numcore.Mlp(sizes, weights, biases, doc["output_activation"])


def _encode_array(arr: np.ndarray) -> str:
    # Little-endian float64 bytes; exact round trip.
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode(
        "ascii"
    )


def _decode_array(blob: str, shape: tuple[int, ...]) -> np.ndarray:
    flat = np.frombuffer(base64.b64decode(blob), dtype="<f8")
    return flat.reshape(shape).astype(np.float64)


def save_checkpoint(
    path: str | Path,
    config: ExperimentConfig,
    agents: Sequence[AgentRuntime],
    iteration: int,
    rng_state: dict | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": config_to_dict(config),
        "iteration": iteration,
        "rng_state": rng_state or {},
        "agents": [
            {
                "actor": _network_to_dict(ag.actor),
                "critic": _network_to_dict(ag.critic),
                "target_actor": _network_to_dict(ag.target_actor),
                "target_critic": _network_to_dict(ag.target_critic),
            }
            for ag in agents
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


@dataclass
class Checkpoint:
    format_version: int
    config: ExperimentConfig
    agents: list[AgentRuntime]
    iteration: int
    rng_state: dict


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version!r}")
    cfg = config_from_dict(doc["config"])
    specs = build_agent_specs(cfg.priors, cfg.actor_hidden, cfg.critic_hidden)
    agents = []
    for spec, entry in zip(specs, doc["agents"]):
        agents.append(
            AgentRuntime(
                spec=spec,
                actor=_network_from_dict(entry["actor"]),
                critic=_network_from_dict(entry["critic"]),
                target_actor=_network_from_dict(entry["target_actor"]),
                target_critic=_network_from_dict(entry["target_critic"]),
            )
        )
    return Checkpoint(
        format_version=version,
        config=cfg,
        agents=agents,
        iteration=int(doc["iteration"]),
        rng_state=doc.get("rng_state", {}),
    )


def _jitter_biases(net: numcore.Mlp, rng: np.random.Generator) -> numcore.Mlp:
    # Zero-bias init can leave pre-activations exactly on the ReLU kink
    # (dead previous layer => z == 0), where central differences are
    # undefined; nudge biases off it for finite-difference comparisons.
    for b in net.biases:
        b += rng.uniform(0.01, 0.2, size=b.shape) * rng.choice((-1.0, 1.0), b.shape)
    return net


def random_check_setup(
    rng: np.random.Generator,
) -> tuple[maddpg.Batch, list[AgentRuntime]]:
    """A random tiny multi-agent configuration plus a random batch.

    Small widths and batches keep central differences over every parameter
    cheap; observations and actions are drawn from their runtime envelopes.
    """
    n = int(rng.integers(1, 4))
    m_counts = [int(rng.integers(2, 5)) for _ in range(n)]
    priors = []
    for m in m_counts:
        p = rng.uniform(0.05, 1.0, m)
        priors.append(p / p.sum())
    hidden = tuple(int(rng.integers(3, 9)) for _ in range(int(rng.integers(1, 3))))
    specs = maddpg.build_agent_specs(priors, hidden, hidden)
    agents = maddpg.init_agents(specs, rng)
    for ag in agents:
        for net in (ag.actor, ag.critic, ag.target_actor, ag.target_critic):
            _jitter_biases(net, rng)
    b = int(rng.integers(2, 7))
    batch = maddpg.Batch(
        obs=[rng.uniform(-5, 5, (b, maddpg.OBS_DIM)) for _ in range(n)],
        actions=[rng.uniform(0, 1, (b, m)) for m in m_counts],
        rewards=[rng.uniform(-7, 0, b) for _ in range(n)],
        next_obs=[rng.uniform(-5, 5, (b, maddpg.OBS_DIM)) for _ in range(n)],
        terminal=(rng.uniform(size=b) < 0.2).astype(np.float64),
    )
    return batch, agents


def run_gradient_checks(seed: int = 0, cases: int = 100) -> dict[str, float]:
    """Finite-difference verification of every analytic gradient path.

    Returns max relative errors for the bare network backward pass, the
    critic regression loss, and the composite regularized actor loss, over
    `cases` random small configurations each. Comparisons use a 1e-6
    magnitude floor: below it, central differences on O(1) losses measure
    float64 cancellation noise rather than the gradients (a sign error at
    that magnitude would still register as ~2).
    """
    floor = 1e-6
    rng = np.random.default_rng(seed)
    worst = {"network_backward": 0.0, "critic_loss": 0.0, "actor_loss": 0.0}
    for _ in range(cases):
        sizes = [int(rng.integers(2, 7)) for _ in range(int(rng.integers(2, 5)))]
        activation = "softmax" if rng.uniform() < 0.5 else "identity"
        net = _jitter_biases(numcore.init_network(sizes, activation, rng), rng)
        x = rng.uniform(-3, 3, (int(rng.integers(1, 6)), sizes[0]))
        target = rng.normal(size=(x.shape[0], sizes[-1]))
        err = numcore.gradient_check(
            net, x, lambda out: numcore.mse_loss(out, target), floor=floor
        )
        worst["network_backward"] = max(worst["network_backward"], err)

        batch, agents = random_check_setup(rng)
        i = int(rng.integers(len(agents)))
        gamma = float(rng.uniform(0.0, 1.0))
        lam = float(rng.uniform(0.0, 4.0))
        worst["critic_loss"] = max(
            worst["critic_loss"],
            maddpg.critic_gradient_error(batch, agents, i, gamma, floor=floor),
        )
        worst["actor_loss"] = max(
            worst["actor_loss"],
            maddpg.actor_gradient_error(batch, agents, i, lam, floor=floor),
        )
    return worst


def run_training(config: ExperimentConfig) -> tuple[Path, Path]:
    """Train per the config; returns (checkpoint path, metrics path)."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = build_agent_specs(config.priors, config.actor_hidden, config.critic_hidden)
    trainer = Trainer(config.trainer, specs, grid_size=config.grid_size)
    n = config.trainer.n_agents
    metrics_path = out_dir / "metrics.csv"
    log.info(
        "run %s: %d agent(s), %d iterations, seed %d",
        config.run_label,
        n,
        config.trainer.iterations,
        config.trainer.seed,
    )
    with open(metrics_path, "w", newline="") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for it in range(config.trainer.iterations):
            metrics = trainer.train_iteration(it)
            eval_returns: list[float | None] = [None] * n
            if (it + 1) % config.eval_every == 0:
                report = evaluate(
                    trainer.agents,
                    config.eval_episodes,
                    trainer.rng_eval,
                    config.grid_size,
                )
                eval_returns = list(report.mean_returns)
                log.info(
                    "iter %d sigma %.3f eval returns %s success %s",
                    it,
                    metrics.sigma,
                    [round(r, 2) for r in report.mean_returns],
                    report.success_rates,
                )
            else:
                log.debug(
                    "iter %d sigma %.3f episodes %d",
                    it,
                    metrics.sigma,
                    metrics.episodes_completed,
                )
            for k in range(n):
                freq = metrics.action_freqs[k]
                cells = (
                    str(it),
                    _fmt(metrics.sigma),
                    str(k),
                    _fmt(metrics.train_returns[k]),
                    _fmt(eval_returns[k]),
                    _fmt(metrics.actor_losses[k]),
                    _fmt(metrics.critic_losses[k]),
                    _fmt(None if freq is None else freq[0]),
                    _fmt(None if freq is None else freq[1]),
                    _fmt(None if freq is None else freq[2]),
                )
                fh.write(",".join(cells) + "\n")
    checkpoint_path = out_dir / "checkpoint.json"
    save_checkpoint(
        checkpoint_path,
        config,
        trainer.agents,
        config.trainer.iterations,
        trainer.rng_state_descriptor(),
    )
    log.info("wrote %s and %s", metrics_path, checkpoint_path)
    return checkpoint_path, metrics_path
