"""Semi-random walk racing a finish line against the clock.

State ``(x, t)``: position and elapsed time.  Each decision advances both by
an action-dependent amount with box uncertainty:

    x' uniform in x + dx(a) +- eps,    t' uniform in t + dt(a) +- eps

``slow`` moves little but costs little, ``fast`` moves further in less time
at a higher cost.  Crossing ``x >= x_goal`` wins; running out of time
(``t >= t_limit`` while ``x < x_goal``) is unsafe.  Terminal states (won or
unsafe) are fixed points of the dynamics, so the abstract game treats the
goal strip as safe forever.

The one-step image of a box is again a box, which makes this the reference
model for the exact successor oracle.  The worst-case draw picks the corner
with minimal ``x`` progress and maximal ``t`` progress.
"""

from __future__ import annotations

import numpy as np

from ..safety_game import SafetyPredicate
from .base import Action, ConfigError, EnvironmentModel

SLOW = 0
FAST = 1


class RandomWalk(EnvironmentModel):
    name = "random_walk"
    dim = 2
    period = 1.0
    random_dims = 2

    def __init__(
        self,
        dx_slow: float = 0.1,
        dt_slow: float = 0.12,
        dx_fast: float = 0.17,
        dt_fast: float = 0.09,
        eps: float = 0.04,
        x_goal: float = 1.0,
        t_limit: float = 1.0,
        cost_slow: float = 1.0,
        cost_fast: float = 3.0,
        x_max: float = 1.25,
        t_max: float = 1.2,
    ):
        if min(dx_slow, dt_slow, dx_fast, dt_fast) <= 0 or eps < 0:
            raise ConfigError("movement amounts must be positive, eps nonnegative")
        if x_goal + dx_fast + eps > x_max or t_limit + max(dt_slow, dt_fast) + eps > t_max:
            raise ConfigError("state bounds too tight for one step past the terminals")
        self.actions = (Action(SLOW, "slow"), Action(FAST, "fast"))
        self.dx = (dx_slow, dx_fast)
        self.dt = (dt_slow, dt_fast)
        self.eps = float(eps)
        self.x_goal = float(x_goal)
        self.t_limit = float(t_limit)
        self.step_cost = (cost_slow, cost_fast)
        self.violation_cost = 1000.0
        self.lower = np.array([0.0, 0.0])
        self.upper = np.array([float(x_max), float(t_max)])

    def config(self) -> dict:
        return {
            "name": self.name,
            "dx": list(self.dx),
            "dt": list(self.dt),
            "eps": self.eps,
            "x_goal": self.x_goal,
            "t_limit": self.t_limit,
        }

    def default_gamma(self) -> np.ndarray:
        return np.array([0.05, 0.05])

    def worst_case_draws(self) -> np.ndarray:
        return np.array([0.0, 1.0])

    # -- dynamics ---------------------------------------------------------

    def _terminal(self, x, t):
        return (x >= self.x_goal) | (t >= self.t_limit)

    def step(self, states, action, draws):
        states = np.asarray(states, dtype=np.float64)
        draws = np.asarray(draws, dtype=np.float64)
        x = states[:, 0]
        t = states[:, 1]
        term = self._terminal(x, t)
        x2 = x + self.dx[action] + self.eps * (2.0 * draws[:, 0] - 1.0)
        t2 = t + self.dt[action] + self.eps * (2.0 * draws[:, 1] - 1.0)
        return np.stack([np.where(term, x, x2), np.where(term, t, t2)], axis=1)

    def step1(self, state, action, draws):
        x, t = float(state[0]), float(state[1])
        if x >= self.x_goal or t >= self.t_limit:
            return (x, t)
        return (
            x + self.dx[action] + self.eps * (2.0 * float(draws[0]) - 1.0),
            t + self.dt[action] + self.eps * (2.0 * float(draws[1]) - 1.0),
        )

    # -- exact one-step box image (used by the successor oracle) -----------

    def box_image(self, low, high, action):
        """Half-open image ``[lo, hi)`` of the non-terminal box ``[low, high)``."""
        d = np.array([self.dx[action], self.dt[action]])
        return low + d - self.eps, high + d + self.eps

    def box_terminal_status(self, low, high) -> str:
        """'goal' / 'unsafe' / 'none' when the box is uniformly terminal or
        uniformly non-terminal, else 'mixed'."""
        if low[0] >= self.x_goal:
            return "goal"
        if high[0] <= self.x_goal and low[1] >= self.t_limit:
            return "unsafe"
        if high[0] <= self.x_goal and high[1] <= self.t_limit:
            return "none"
        return "mixed"

    # -- predicates and cost ----------------------------------------------

    def is_unsafe(self, states):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return (states[:, 1] >= self.t_limit) & (states[:, 0] < self.x_goal)

    def is_unsafe1(self, state):
        return state[1] >= self.t_limit and state[0] < self.x_goal

    def is_goal(self, states, t):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return states[:, 0] >= self.x_goal

    def is_goal1(self, state, t):
        return state[0] >= self.x_goal

    def cost(self, states, action, next_states):
        n = np.atleast_2d(states).shape[0]
        c = np.full(n, self.step_cost[action])
        return c + self.violation_cost * self.is_unsafe(next_states)

    def cost1(self, state, action, next_state):
        c = self.step_cost[action]
        if self.is_unsafe1(next_state):
            c += self.violation_cost
        return c

    # -- episodes and abstraction -------------------------------------------

    def initial_states(self, n, rng):
        return np.zeros((n, 2))

    def safety_predicate(self):
        # unsafe: x < x_goal (strict) and t >= t_limit
        def holds(states):
            return ~self.is_unsafe(states)

        return SafetyPredicate(
            unsafe_boxes=[
                (
                    np.array([self.lower[0], self.t_limit]),
                    np.array([self.x_goal, self.upper[1]]),
                )
            ],
            holds_fn=holds,
        )
