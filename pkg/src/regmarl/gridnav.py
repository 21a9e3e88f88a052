"""N agents navigating a square grid with relative-turn actions.

Geometry: x grows east, y grows north, cell (0, 0) is the south-west corner.
Every agent starts at (3, 0) facing north; destinations are drawn uniformly
over the remaining cells, independently per agent (duplicates allowed).

Every action first rotates the agent's heading (left/right by 90 degrees,
straight keeps it), then advances it one cell along the new heading, clamped
to the board per axis — so every action moves the agent and each step
occupies a new cell (walls excepted).

The per-step reward is the negated Euclidean distance to the agent's
destination, so it peaks at 0 on arrival; an agent that arrives freezes at
its destination (reward 0) until the episode ends. Observations are the
2-vector from agent to destination. Episodes end when every agent has
arrived or after `max_steps` steps.

`step` is a pure function of (state, actions); randomness only enters via
`reset`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

START_CELL = (3, 0)
DEFAULT_GRID_SIZE = 6
DEFAULT_MAX_STEPS = 50


class Heading(IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3


class Action(IntEnum):
    LEFT = 0
    STRAIGHT = 1
    RIGHT = 2


# Unit moves per heading, (dx, dy) with north = +y.
_DELTAS = {
    Heading.NORTH: (0, 1),
    Heading.EAST: (1, 0),
    Heading.SOUTH: (0, -1),
    Heading.WEST: (-1, 0),
}


def turn(heading: Heading, action: Action) -> Heading:
    """Heading after the rotation part of an action (straight keeps it)."""
    if action == Action.LEFT:
        return Heading((heading - 1) % 4)
    if action == Action.RIGHT:
        return Heading((heading + 1) % 4)
    return heading


@dataclass(frozen=True)
class AgentState:
    position: tuple[int, int]
    heading: Heading
    destination: tuple[int, int]
    reached: bool


@dataclass(frozen=True)
class GridState:
    agents: tuple[AgentState, ...]
    step_count: int
    grid_size: int = DEFAULT_GRID_SIZE
    max_steps: int = DEFAULT_MAX_STEPS

    @property
    def n_agents(self) -> int:
        return len(self.agents)


def is_done(state: GridState) -> bool:
    return state.step_count >= state.max_steps or all(
        a.reached for a in state.agents
    )


def observe(state: GridState, agent: int) -> np.ndarray:
    """Vector from agent to its destination, as float64."""
    a = state.agents[agent]
    return np.array(
        [a.destination[0] - a.position[0], a.destination[1] - a.position[1]],
        dtype=np.float64,
    )


def reward_of(state: GridState, agent: int) -> float:
    """Negated Euclidean distance to the destination (0 at the destination)."""
    a = state.agents[agent]
    return -math.hypot(
        a.destination[0] - a.position[0], a.destination[1] - a.position[1]
    )


def _observations(state: GridState) -> list[np.ndarray]:
    return [observe(state, i) for i in range(state.n_agents)]


def _draw_destination(rng: np.random.Generator, grid_size: int) -> tuple[int, int]:
    # Uniform over all cells except the shared start cell.
    n_cells = grid_size * grid_size
    start_index = START_CELL[0] * grid_size + START_CELL[1]
    idx = int(rng.integers(n_cells - 1))
    if idx >= start_index:
        idx += 1
    return (idx // grid_size, idx % grid_size)


def reset(
    n_agents: int,
    rng: np.random.Generator,
    grid_size: int = DEFAULT_GRID_SIZE,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> tuple[GridState, list[np.ndarray]]:
    """Fresh episode: all agents at the start cell, random destinations."""
    if n_agents < 1:
        raise ValueError(f"n_agents must be >= 1, got {n_agents}")
    if grid_size <= max(START_CELL):
        raise ValueError(f"grid_size must exceed {max(START_CELL)}, got {grid_size}")
    agents = tuple(
        AgentState(
            position=START_CELL,
            heading=Heading.NORTH,
            destination=_draw_destination(rng, grid_size),
            reached=False,
        )
        for _ in range(n_agents)
    )
    state = GridState(agents=agents, step_count=0, grid_size=grid_size, max_steps=max_steps)
    return state, _observations(state)


def step(
    state: GridState, actions: Sequence[int]
) -> tuple[GridState, list[np.ndarray], list[float], bool]:
    """Advance one time-step; returns (next_state, observations, rewards, done)."""
    if len(actions) != state.n_agents:
        raise ValueError(
            f"got {len(actions)} actions for {state.n_agents} agents"
        )
    if is_done(state):
        raise ValueError("step called on a finished episode")
    hi = state.grid_size - 1
    agents = []
    for agent, raw in zip(state.agents, actions):
        action = Action(raw)
        if agent.reached:
            agents.append(agent)
            continue
        heading = turn(agent.heading, action)
        dx, dy = _DELTAS[heading]
        pos = (
            min(max(agent.position[0] + dx, 0), hi),
            min(max(agent.position[1] + dy, 0), hi),
        )
        agents.append(
            AgentState(
                position=pos,
                heading=heading,
                destination=agent.destination,
                reached=pos == agent.destination,
            )
        )
    next_state = GridState(
        agents=tuple(agents),
        step_count=state.step_count + 1,
        grid_size=state.grid_size,
        max_steps=state.max_steps,
    )
    rewards = [reward_of(next_state, i) for i in range(next_state.n_agents)]
    return next_state, _observations(next_state), rewards, is_done(next_state)
