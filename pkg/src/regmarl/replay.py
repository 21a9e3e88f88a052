"""Fixed-capacity FIFO experience store with uniform batch sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    """One joint time-step: per-agent obs / noisy action vectors / rewards,
    per-agent next obs, and the episode-end flag."""

    obs: list[np.ndarray]
    action_vecs: list[np.ndarray]
    rewards: list[float]
    next_obs: list[np.ndarray]
    terminal: bool


class ReplayBuffer:
    """Ring buffer: at capacity, each push evicts the oldest transition."""

    def __init__(self, capacity: int, n_agents: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        if n_agents < 1:
            raise ValueError(f"n_agents must be >= 1, got {n_agents}")
        self.capacity = capacity
        self.n_agents = n_agents
        self._slots: list[Transition] = []
        self._cursor = 0  # next slot to overwrite once full

    def __len__(self) -> int:
        return len(self._slots)

    def push(self, transition: Transition) -> None:
        for name, seq in (
            ("obs", transition.obs),
            ("action_vecs", transition.action_vecs),
            ("rewards", transition.rewards),
            ("next_obs", transition.next_obs),
        ):
            if len(seq) != self.n_agents:
                raise ValueError(
                    f"transition {name} has {len(seq)} entries, expected {self.n_agents}"
                )
        for vec in transition.action_vecs:
            if vec.min() < 0.0 or vec.max() > 1.0:
                raise ValueError("action vector entries must lie in [0, 1]")
        if len(self._slots) < self.capacity:
            self._slots.append(transition)
        else:
            self._slots[self._cursor] = transition
            self._cursor = (self._cursor + 1) % self.capacity

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        if len(self._slots) < self.capacity:
            return list(self._slots)
        return self._slots[self._cursor :] + self._slots[: self._cursor]

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform draw with replacement; never mutates the buffer."""
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if len(self._slots) < batch_size:
            raise ValueError(
                f"buffer holds {len(self._slots)} transitions, need {batch_size}"
            )
        idx = rng.integers(0, len(self._slots), size=batch_size)
        return [self._slots[i] for i in idx]
