"""Experiment configuration: TOML loading, validation, dict round-trips.

Config files are flat TOML; every hyperparameter has an explicit default
matching the shipped grid-navigation experiments. `priors` is the only
required key and fixes the number of agents.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .maddpg import NoiseSchedule, TrainerConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    trainer: TrainerConfig
    priors: tuple[tuple[float, ...], ...]
    actor_hidden: tuple[int, ...] = (200, 200)
    critic_hidden: tuple[int, ...] = (200, 200)
    grid_size: int = 6
    eval_every: int = 10
    eval_episodes: int = 20
    out_dir: str = "runs/run"
    run_label: str = "run"

    def __post_init__(self):
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.eval_episodes < 1:
            raise ConfigError(f"eval_episodes must be >= 1, got {self.eval_episodes}")
        if len(self.priors) != self.trainer.n_agents:
            raise ConfigError(
                f"{len(self.priors)} priors for n_agents={self.trainer.n_agents}"
            )


# Flat TOML keys. "lambda" maps to TrainerConfig.lam.
_TRAINER_KEYS = {
    "lambda": "lam",
    "gamma": "gamma",
    "tau": "tau",
    "actor_lr": "actor_lr",
    "critic_lr": "critic_lr",
    "batch_size": "batch_size",
    "buffer_capacity": "buffer_capacity",
    "iterations": "iterations",
    "steps_per_iteration": "steps_per_iteration",
    "epochs_per_iteration": "epochs_per_iteration",
    "seed": "seed",
    "mask_terminal_bootstrap": "mask_terminal_bootstrap",
}
_NOISE_KEYS = {
    "sigma_start": "sigma_start",
    "sigma_end": "sigma_end",
    "noise_decay_fraction": "decay_fraction",
}
_TOP_KEYS = {
    "priors",
    "actor_hidden",
    "critic_hidden",
    "grid_size",
    "eval_every",
    "eval_episodes",
    "out_dir",
    "run_label",
}
KNOWN_KEYS = _TOP_KEYS | set(_TRAINER_KEYS) | set(_NOISE_KEYS)


def config_from_dict(raw: dict) -> ExperimentConfig:
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if "priors" not in raw:
        raise ConfigError("missing required key: priors")
    priors = raw["priors"]
    if not isinstance(priors, (list, tuple)) or not priors:
        raise ConfigError("priors must be a non-empty list of per-agent lists")
    if not all(isinstance(p, (list, tuple)) and p for p in priors):
        raise ConfigError("each prior must be a non-empty list of probabilities")
    priors = tuple(tuple(float(v) for v in p) for p in priors)
    for idx, p in enumerate(priors):
        if any(v < 0.0 or v > 1.0 for v in p) or abs(sum(p) - 1.0) > 1e-9:
            raise ConfigError(
                f"priors[{idx}] must be a probability distribution, got {list(p)}"
            )

    noise_kwargs = {
        field_name: raw[key] for key, field_name in _NOISE_KEYS.items() if key in raw
    }
    trainer_kwargs = {
        field_name: raw[key] for key, field_name in _TRAINER_KEYS.items() if key in raw
    }
    try:
        trainer = TrainerConfig(
            n_agents=len(priors), noise=NoiseSchedule(**noise_kwargs), **trainer_kwargs
        )
        return ExperimentConfig(
            trainer=trainer,
            priors=priors,
            actor_hidden=tuple(int(v) for v in raw.get("actor_hidden", (200, 200))),
            critic_hidden=tuple(int(v) for v in raw.get("critic_hidden", (200, 200))),
            grid_size=int(raw.get("grid_size", 6)),
            eval_every=int(raw.get("eval_every", 10)),
            eval_episodes=int(raw.get("eval_episodes", 20)),
            out_dir=str(raw.get("out_dir", "runs/run")),
            run_label=str(raw.get("run_label", "run")),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Flat dict mirroring the TOML keys; round-trips via config_from_dict."""
    t = cfg.trainer
    return {
        "run_label": cfg.run_label,
        "out_dir": cfg.out_dir,
        "seed": t.seed,
        "grid_size": cfg.grid_size,
        "priors": [list(p) for p in cfg.priors],
        "actor_hidden": list(cfg.actor_hidden),
        "critic_hidden": list(cfg.critic_hidden),
        "lambda": t.lam,
        "gamma": t.gamma,
        "tau": t.tau,
        "actor_lr": t.actor_lr,
        "critic_lr": t.critic_lr,
        "batch_size": t.batch_size,
        "buffer_capacity": t.buffer_capacity,
        "iterations": t.iterations,
        "steps_per_iteration": t.steps_per_iteration,
        "epochs_per_iteration": t.epochs_per_iteration,
        "sigma_start": t.noise.sigma_start,
        "sigma_end": t.noise.sigma_end,
        "noise_decay_fraction": t.noise.decay_fraction,
        "eval_every": cfg.eval_every,
        "eval_episodes": cfg.eval_episodes,
        "mask_terminal_bootstrap": t.mask_terminal_bootstrap,
    }


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return config_from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def with_overrides(
    cfg: ExperimentConfig, seed: int | None = None, out_dir: str | None = None
) -> ExperimentConfig:
    """Copy with CLI-style seed/output overrides applied."""
    if seed is not None:
        cfg = replace(cfg, trainer=replace(cfg.trainer, seed=seed))
    if out_dir is not None:
        cfg = replace(cfg, out_dir=out_dir)
    return cfg
