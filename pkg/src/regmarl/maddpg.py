"""Per-agent actor-critic trainer with a prior-matching action regularizer.

Each agent owns four networks: a softmax actor mapping its own observation to
a vector of action propensities, a critic scoring (own observation, all
agents' action vectors), and slowly tracking target copies of both. The
critic regresses onto the one-step bootstrapped value computed with the
target networks; the actor minimises

    -mean(Q) + lam / M * sum_j (batch_mean_action_j - prior_j)^2

so reward pushes individual actions around while the batch-mean action
profile is pulled toward a fixed, observation-independent prior. With lam=0
this is plain multi-agent DDPG.

Collection stores the continuous noisy actor outputs (clipped to [0, 1]) in
the replay buffer while the environment executes their argmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import gridnav, numcore
from .numcore import Mlp
from .replay import ReplayBuffer, Transition

OBS_DIM = 2


@dataclass
class NoiseSchedule:
    """Exploration noise sigma, decaying linearly from `sigma_start` to
    `sigma_end` over the first `decay_fraction` of all iterations."""

    sigma_start: float = 0.5
    sigma_end: float = 0.0
    decay_fraction: float = 0.8

    def __post_init__(self):
        if not (self.sigma_start >= self.sigma_end >= 0.0):
            raise ValueError(
                f"need sigma_start >= sigma_end >= 0, got "
                f"{self.sigma_start}, {self.sigma_end}"
            )
        if not (0.0 <= self.decay_fraction <= 1.0):
            raise ValueError(f"decay_fraction must be in [0, 1], got {self.decay_fraction}")

    def sigma_at(self, iteration: int, total_iterations: int) -> float:
        span = self.decay_fraction * total_iterations
        if span <= 0:
            return self.sigma_end
        frac = min(1.0, iteration / span)
        return self.sigma_start + (self.sigma_end - self.sigma_start) * frac


@dataclass
class TrainerConfig:
    n_agents: int
    lam: float = 2.0  # prior-penalty weight
    gamma: float = 0.95
    tau: float = 0.06
    actor_lr: float = 0.04
    critic_lr: float = 0.06
    batch_size: int = 256
    buffer_capacity: int = 2048
    iterations: int = 3000
    steps_per_iteration: int = 256
    epochs_per_iteration: int = 2
    noise: NoiseSchedule = field(default_factory=NoiseSchedule)
    seed: int = 1
    mask_terminal_bootstrap: bool = True

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.lam < 0.0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        for name in (
            "n_agents",
            "batch_size",
            "buffer_capacity",
            "iterations",
            "steps_per_iteration",
            "epochs_per_iteration",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.actor_lr < 0.0 or self.critic_lr < 0.0:
            raise ValueError("learning rates must be >= 0")


@dataclass
class AgentSpec:
    """Per-agent prior action distribution and network layer plans."""

    prior: np.ndarray
    actor_layer_sizes: tuple[int, ...]
    critic_layer_sizes: tuple[int, ...]

    def __post_init__(self):
        self.prior = np.asarray(self.prior, dtype=np.float64)
        if self.prior.ndim != 1 or self.prior.size < 1:
            raise ValueError("prior must be a non-empty vector")
        if self.prior.min() < 0.0 or self.prior.max() > 1.0:
            raise ValueError(f"prior entries must lie in [0, 1], got {self.prior}")
        if abs(float(self.prior.sum()) - 1.0) > 1e-9:
            raise ValueError(f"prior must sum to 1, got sum {self.prior.sum()!r}")
        if self.actor_layer_sizes[-1] != self.prior.size:
            raise ValueError(
                f"actor output width {self.actor_layer_sizes[-1]} != prior length "
                f"{self.prior.size}"
            )
        if self.critic_layer_sizes[-1] != 1:
            raise ValueError("critic output width must be 1")

    @property
    def action_count(self) -> int:
        return self.prior.size


def build_agent_specs(
    priors: Sequence[Sequence[float]],
    actor_hidden: Sequence[int],
    critic_hidden: Sequence[int],
    obs_dim: int = OBS_DIM,
) -> list[AgentSpec]:
    """Layer plans for all agents; each critic sees (own obs, all actions)."""
    total_actions = sum(len(p) for p in priors)
    return [
        AgentSpec(
            prior=np.asarray(p, dtype=np.float64),
            actor_layer_sizes=(obs_dim, *map(int, actor_hidden), len(p)),
            critic_layer_sizes=(obs_dim + total_actions, *map(int, critic_hidden), 1),
        )
        for p in priors
    ]


@dataclass
class AgentRuntime:
    """Live and target networks for one agent."""

    spec: AgentSpec
    actor: Mlp
    critic: Mlp
    target_actor: Mlp
    target_critic: Mlp


def init_agents(specs: Sequence[AgentSpec], rng: np.random.Generator) -> list[AgentRuntime]:
    """Fresh runtimes; targets start as exact copies of the live networks."""
    agents = []
    for spec in specs:
        actor = numcore.init_network(spec.actor_layer_sizes, "softmax", rng)
        critic = numcore.init_network(spec.critic_layer_sizes, "identity", rng)
        agents.append(
            AgentRuntime(
                spec=spec,
                actor=actor,
                critic=critic,
                target_actor=actor.copy(),
                target_critic=critic.copy(),
            )
        )
    return agents


@dataclass
class Batch:
    """Stacked transitions: per-agent arrays plus the shared terminal mask."""

    obs: list[np.ndarray]
    actions: list[np.ndarray]
    rewards: list[np.ndarray]
    next_obs: list[np.ndarray]
    terminal: np.ndarray

    @property
    def size(self) -> int:
        return self.terminal.shape[0]


def batch_from_transitions(transitions: Sequence[Transition]) -> Batch:
    if not transitions:
        raise ValueError("cannot build a batch from zero transitions")
    n = len(transitions[0].obs)
    return Batch(
        obs=[np.stack([t.obs[k] for t in transitions]) for k in range(n)],
        actions=[np.stack([t.action_vecs[k] for t in transitions]) for k in range(n)],
        rewards=[
            np.array([t.rewards[k] for t in transitions], dtype=np.float64)
            for k in range(n)
        ],
        next_obs=[np.stack([t.next_obs[k] for t in transitions]) for k in range(n)],
        terminal=np.array([t.terminal for t in transitions], dtype=np.float64),
    )


def select_action(
    agent: AgentRuntime, obs: np.ndarray, sigma: float, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    """Noisy action vector (clipped to [0, 1]) and the argmax index to execute.

    Ties break toward the lowest index. The clipped vector, not the one-hot
    choice, is what belongs in the replay buffer.
    """
    if sigma < 0.0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    out, _ = numcore.forward(agent.actor, np.asarray(obs, dtype=np.float64).reshape(1, -1))
    vec = out[0]
    if sigma > 0.0:
        vec = vec + rng.normal(0.0, sigma, size=vec.shape)
    vec = np.clip(vec, 0.0, 1.0)
    return vec, int(np.argmax(vec))


def critic_target(
    batch: Batch,
    agents: Sequence[AgentRuntime],
    i: int,
    gamma: float,
    mask_terminal: bool = True,
) -> np.ndarray:
    """Bootstrapped regression target r_i + gamma * Q'_i(next obs, target actions).

    Evaluated entirely with target networks; no gradient flows from here.
    With `mask_terminal`, the bootstrap term is zeroed on episode-ending
    transitions.
    """
    next_actions = [
        numcore.forward(ag.target_actor, batch.next_obs[k])[0]
        for k, ag in enumerate(agents)
    ]
    x = np.concatenate([batch.next_obs[i]] + next_actions, axis=1)
    q_next = numcore.forward(agents[i].target_critic, x)[0][:, 0]
    scale = gamma * (1.0 - batch.terminal) if mask_terminal else gamma
    return batch.rewards[i] + scale * q_next


def critic_loss_and_grads(
    batch: Batch,
    agents: Sequence[AgentRuntime],
    i: int,
    gamma: float,
    mask_terminal: bool = True,
) -> tuple[float, numcore.GradientSet]:
    """MSE of Q_i(own obs, stored joint actions) against the bootstrap target."""
    target = critic_target(batch, agents, i, gamma, mask_terminal)
    x = np.concatenate([batch.obs[i]] + batch.actions, axis=1)
    q, cache = numcore.forward(agents[i].critic, x)
    loss, gout = numcore.mse_loss(q, target[:, None])
    grads, _ = numcore.backward(agents[i].critic, cache, gout)
    return loss, grads


def critic_update(
    batch: Batch,
    agents: Sequence[AgentRuntime],
    i: int,
    critic_lr: float,
    gamma: float,
    mask_terminal: bool = True,
) -> float:
    """One SGD step on agent i's critic; returns the pre-step loss."""
    loss, grads = critic_loss_and_grads(batch, agents, i, gamma, mask_terminal)
    if not math.isfinite(loss):
        raise FloatingPointError(f"critic loss for agent {i} is not finite: {loss}")
    numcore.sgd_step(agents[i].critic, grads, critic_lr)
    return loss


def prior_penalty(mean_action: np.ndarray, prior: np.ndarray, lam: float) -> float:
    """lam / M * sum_j (mean_action_j - prior_j)^2."""
    diff = np.asarray(mean_action, dtype=np.float64) - prior
    return lam / prior.size * float(np.dot(diff, diff))


def actor_loss(batch: Batch, agents: Sequence[AgentRuntime], i: int, lam: float) -> float:
    """Value of the regularized actor objective for agent i (no gradients)."""
    current = [
        numcore.forward(ag.actor, batch.obs[k])[0] for k, ag in enumerate(agents)
    ]
    x = np.concatenate([batch.obs[i]] + current, axis=1)
    q, _ = numcore.forward(agents[i].critic, x)
    penalty = prior_penalty(current[i].mean(axis=0), agents[i].spec.prior, lam)
    return -float(np.mean(q)) + penalty


def actor_loss_and_grads(
    batch: Batch, agents: Sequence[AgentRuntime], i: int, lam: float
) -> tuple[float, numcore.GradientSet]:
    """Loss and exact gradients wrt agent i's actor parameters only.

    The critic contributes through its input-gradient on agent i's action
    slice; the prior penalty adds a constant row gradient; both flow back
    through agent i's softmax head. Other agents' actors and all critics
    receive no gradient.
    """
    current: list[np.ndarray] = []
    cache_i = None
    for k, ag in enumerate(agents):
        out, cache = numcore.forward(ag.actor, batch.obs[k])
        current.append(out)
        if k == i:
            cache_i = cache
    x = np.concatenate([batch.obs[i]] + current, axis=1)
    q, critic_cache = numcore.forward(agents[i].critic, x)

    b = batch.size
    prior = agents[i].spec.prior
    m = prior.size
    diff = current[i].mean(axis=0) - prior
    loss = -float(np.mean(q)) + lam / m * float(np.dot(diff, diff))

    # d(-mean Q)/dQ = -1/B per sample, pushed back to the critic's inputs.
    _, dx = numcore.backward(agents[i].critic, critic_cache, np.full((b, 1), -1.0 / b))
    offset = batch.obs[i].shape[1] + sum(a.shape[1] for a in current[:i])
    grad_actions = dx[:, offset : offset + m].copy()
    grad_actions += (2.0 * lam / (m * b)) * diff
    grads, _ = numcore.backward(agents[i].actor, cache_i, grad_actions)
    return loss, grads


def actor_update(
    batch: Batch, agents: Sequence[AgentRuntime], i: int, actor_lr: float, lam: float
) -> float:
    """One SGD step on agent i's actor; returns the pre-step loss."""
    loss, grads = actor_loss_and_grads(batch, agents, i, lam)
    if not math.isfinite(loss):
        raise FloatingPointError(f"actor loss for agent {i} is not finite: {loss}")
    numcore.sgd_step(agents[i].actor, grads, actor_lr)
    return loss


def soft_update(live: Mlp, target: Mlp, tau: float) -> Mlp:
    """Polyak step: target <- tau * live + (1 - tau) * target, in place."""
    if not (0.0 < tau <= 1.0):
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    if live.layer_sizes != target.layer_sizes:
        raise ValueError(
            f"network shapes differ: {live.layer_sizes} vs {target.layer_sizes}"
        )
    for lp, tp in zip(live.parameters(), target.parameters()):
        tp *= 1.0 - tau
        tp += tau * lp
    return target


def critic_gradient_error(
    batch: Batch,
    agents: Sequence[AgentRuntime],
    i: int,
    gamma: float,
    epsilon: float = 1e-5,
    floor: float = 1e-12,
) -> float:
    """Analytic critic gradients vs central differences (max relative error)."""
    _, analytic = critic_loss_and_grads(batch, agents, i, gamma)

    def value() -> float:
        target = critic_target(batch, agents, i, gamma)
        x = np.concatenate([batch.obs[i]] + batch.actions, axis=1)
        q, _ = numcore.forward(agents[i].critic, x)
        return numcore.mse_loss(q, target[:, None])[0]

    numeric = numcore.numeric_gradient(agents[i].critic, value, epsilon)
    return numcore.max_relative_error(analytic, numeric, floor)


def actor_gradient_error(
    batch: Batch,
    agents: Sequence[AgentRuntime],
    i: int,
    lam: float,
    epsilon: float = 1e-5,
    floor: float = 1e-12,
) -> float:
    """Analytic composite actor gradients vs central differences."""
    _, analytic = actor_loss_and_grads(batch, agents, i, lam)
    numeric = numcore.numeric_gradient(
        agents[i].actor, lambda: actor_loss(batch, agents, i, lam), epsilon
    )
    return numcore.max_relative_error(analytic, numeric, floor)


@dataclass
class IterationMetrics:
    """What one training iteration produced, per agent where applicable.

    `train_returns` averages the episodes that completed within the
    iteration (None if none did); losses average the iteration's update
    epochs (None during buffer warm-up); `action_freqs` are frequencies of
    executed actions over steps where the agent was still active.
    """

    iteration: int
    sigma: float
    episodes_completed: int
    epochs_run: int
    train_returns: list[float | None]
    actor_losses: list[float | None]
    critic_losses: list[float | None]
    action_freqs: list[np.ndarray | None]


class Trainer:
    """Owns the agents, environment stream, and replay buffer for one run.

    Episodes roll freely across iteration boundaries; each iteration collects
    a fixed number of environment steps, then runs a fixed number of update
    epochs, each on one sampled batch, updating every agent in index order
    (critic, then actor, then its target networks).
    """

    def __init__(
        self,
        config: TrainerConfig,
        specs: Sequence[AgentSpec],
        grid_size: int = gridnav.DEFAULT_GRID_SIZE,
    ):
        if len(specs) != config.n_agents:
            raise ValueError(
                f"{len(specs)} agent specs for n_agents={config.n_agents}"
            )
        self.config = config
        self.grid_size = grid_size
        streams = np.random.SeedSequence(config.seed).spawn(5)
        self.rng_init, self.rng_env, self.rng_noise, self.rng_sample, self.rng_eval = (
            np.random.Generator(np.random.PCG64(s)) for s in streams
        )
        self.agents = init_agents(specs, self.rng_init)
        self.buffer = ReplayBuffer(config.buffer_capacity, config.n_agents)
        self._state: gridnav.GridState | None = None
        self._obs: list[np.ndarray] = []
        self._episode_returns = np.zeros(config.n_agents)

    def rng_state_descriptor(self) -> dict:
        names = ("init", "env", "noise", "sample", "eval")
        gens = (self.rng_init, self.rng_env, self.rng_noise, self.rng_sample, self.rng_eval)
        return {
            "seed": self.config.seed,
            "streams": {n: g.bit_generator.state for n, g in zip(names, gens)},
        }

    def _reset_env(self) -> None:
        self._state, self._obs = gridnav.reset(
            self.config.n_agents, self.rng_env, self.grid_size
        )
        self._episode_returns = np.zeros(self.config.n_agents)

    def train_iteration(self, iteration: int) -> IterationMetrics:
        cfg = self.config
        n = cfg.n_agents
        sigma = cfg.noise.sigma_at(iteration, cfg.iterations)
        completed: list[list[float]] = [[] for _ in range(n)]
        action_counts = [np.zeros(ag.spec.action_count) for ag in self.agents]

        for _ in range(cfg.steps_per_iteration):
            if self._state is None or gridnav.is_done(self._state):
                self._reset_env()
            state = self._state
            assert state is not None
            active = [not a.reached for a in state.agents]
            vecs = []
            ids = []
            for k in range(n):
                vec, aid = select_action(self.agents[k], self._obs[k], sigma, self.rng_noise)
                vecs.append(vec)
                ids.append(aid)
            next_state, next_obs, rewards, done = gridnav.step(state, ids)
            self.buffer.push(
                Transition(
                    obs=list(self._obs),
                    action_vecs=vecs,
                    rewards=rewards,
                    next_obs=next_obs,
                    terminal=done,
                )
            )
            for k in range(n):
                self._episode_returns[k] += rewards[k]
                if active[k]:
                    action_counts[k][ids[k]] += 1
            if done:
                for k in range(n):
                    completed[k].append(float(self._episode_returns[k]))
            self._state, self._obs = next_state, next_obs

        actor_losses: list[list[float]] = [[] for _ in range(n)]
        critic_losses: list[list[float]] = [[] for _ in range(n)]
        epochs_run = 0
        if len(self.buffer) >= cfg.batch_size:
            for _ in range(cfg.epochs_per_iteration):
                batch = batch_from_transitions(
                    self.buffer.sample(cfg.batch_size, self.rng_sample)
                )
                for i in range(n):
                    closs = critic_update(
                        batch, self.agents, i, cfg.critic_lr, cfg.gamma,
                        cfg.mask_terminal_bootstrap,
                    )
                    aloss = actor_update(batch, self.agents, i, cfg.actor_lr, cfg.lam)
                    soft_update(self.agents[i].actor, self.agents[i].target_actor, cfg.tau)
                    soft_update(self.agents[i].critic, self.agents[i].target_critic, cfg.tau)
                    critic_losses[i].append(closs)
                    actor_losses[i].append(aloss)
                epochs_run += 1

        return IterationMetrics(
            iteration=iteration,
            sigma=sigma,
            episodes_completed=len(completed[0]),
            epochs_run=epochs_run,
            train_returns=[
                float(np.mean(r)) if r else None for r in completed
            ],
            actor_losses=[float(np.mean(l)) if l else None for l in actor_losses],
            critic_losses=[float(np.mean(l)) if l else None for l in critic_losses],
            action_freqs=[
                c / c.sum() if c.sum() > 0 else None for c in action_counts
            ],
        )
