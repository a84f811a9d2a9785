"""Common simulation-model interface.

A model advances the state by exactly one control period under a chosen
action: the action's instantaneous effect first, then the environment's
hybrid response for ``period`` time units.  All stochasticity is routed
through explicit unit draws in ``[0, 1]`` (``random_dims`` per step), so a
step is a deterministic function of ``(state, action, draws)`` and any
number of workers can simulate concurrently from independent streams.

Each model also declares its safety/goal predicates, step cost, canonical
state bounds and default grid granularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..partition import PartitionSpec
from ..safety_game import SafetyPredicate


class ConfigError(ValueError):
    """Invalid model or run configuration."""


@dataclass(frozen=True)
class Action:
    id: int
    name: str


class EnvironmentModel:
    """Base class; concrete models fill in the attributes and override the
    vectorized primitives.  Scalar helpers fall back to the vectorized path
    unless a model provides a faster hand-written one.
    """

    name: str = "abstract"
    dim: int = 0
    period: float = 1.0
    random_dims: int = 0

    def __init__(self):
        self.actions: tuple[Action, ...] = ()
        self.lower = np.zeros(0)
        self.upper = np.zeros(0)

    # -- simulation ----------------------------------------------------

    def step(self, states: np.ndarray, action: int, draws: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def step1(self, state: tuple, action: int, draws) -> tuple:
        out = self.step(np.asarray(state, dtype=np.float64).reshape(1, -1),
                        action,
                        np.asarray(draws, dtype=np.float64).reshape(1, -1))
        return tuple(float(x) for x in out[0])

    def worst_case_draws(self) -> np.ndarray:
        """Unit draws realizing the safety-pessimal outcome of one step."""
        raise NotImplementedError

    # -- predicates and cost --------------------------------------------

    def is_unsafe(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def is_goal(self, states: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError

    def cost(self, states: np.ndarray, action: int, next_states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def is_unsafe1(self, state: tuple) -> bool:
        return bool(self.is_unsafe(np.asarray(state).reshape(1, -1))[0])

    def is_goal1(self, state: tuple, t: float) -> bool:
        return bool(self.is_goal(np.asarray(state).reshape(1, -1), t)[0])

    def cost1(self, state: tuple, action: int, next_state: tuple) -> float:
        return float(
            self.cost(np.asarray(state).reshape(1, -1), action,
                      np.asarray(next_state).reshape(1, -1))[0]
        )

    # -- episode support -------------------------------------------------

    def initial_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def initial_state1(self, rng: np.random.Generator) -> tuple:
        return tuple(float(x) for x in self.initial_states(1, rng)[0])

    # -- abstraction support ----------------------------------------------

    def safety_predicate(self) -> SafetyPredicate:
        raise NotImplementedError

    def default_gamma(self) -> np.ndarray:
        raise NotImplementedError

    def partition_spec(self, gamma=None) -> PartitionSpec:
        g = self.default_gamma() if gamma is None else gamma
        return PartitionSpec(self.lower, self.upper, g)

    def config(self) -> dict:
        """Canonical parameter dictionary, used for cache digests."""
        raise NotImplementedError

    # -- misc -------------------------------------------------------------

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    def action_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.actions)

    def draw_batch(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.random_dims == 0:
            return np.zeros((n, 0))
        return rng.random((n, self.random_dims))


def step_all(model: EnvironmentModel, states: np.ndarray, actions: np.ndarray,
             draws: np.ndarray) -> np.ndarray:
    """Advance a batch where each row may use a different action."""
    out = np.empty_like(states)
    for a in range(model.num_actions):
        rows = actions == a
        if np.any(rows):
            out[rows] = model.step(states[rows], a, draws[rows])
    return out
