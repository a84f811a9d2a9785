"""Bouncing ball with a periodic hit action.

State ``(p, v)``: height in metres (nonnegative) and vertical velocity in
m/s.  Between control decisions the ball follows ballistic flow

    p(t) = -4.905 t^2 + v t + p,    v(t) = -9.81 t + v

and bounces whenever it reaches the ground, reversing its velocity with a
random damping factor in ``[-0.97, -0.85]``.  Every ``period = 0.1`` s the
controller picks ``nohit`` (no effect) or ``hit``: with the ball at height
4 m or above, a hit accelerates a slowly falling ball (``-4 <= v <= 0``) to
``-4`` m/s and knocks a rising ball down to a random velocity in
``[-v - 4, -0.9 v - 4]``.  The ball is dead once ``p <= 0.01`` and
``|v| <= 1``.

One step consumes two unit draws: the hit reset and the bounce damping.
Multiple bounces within one period (only possible at very low energy) share
the damping draw, so a step is a function of exactly ``(state, action,
2 draws)``.  More than 32 bounces in one period (Zeno behaviour at the
rest state) place the ball at rest ``(0, 0)``, which is dead.

The worst-case draw vector selects maximal energy loss: damping exactly
``-0.85`` and the low-energy end of the hit interval.
"""

from __future__ import annotations

import math

import numpy as np

from ..safety_game import SafetyPredicate
from .base import Action, EnvironmentModel

GRAVITY = 9.81

NOHIT = 0
HIT = 1


def bb_flow(p, v, t):
    """Ballistic flow from ``(p, v)`` for ``t`` seconds (no ground check)."""
    return -0.5 * GRAVITY * t * t + v * t + p, -GRAVITY * t + v


def bb_bounce_time(p, v):
    """Nonnegative delay until the ball reaches the ground.

    Zero when already at the ground and not moving upward.
    """
    p = np.maximum(np.asarray(p, dtype=np.float64), 0.0)
    v = np.asarray(v, dtype=np.float64)
    return (v + np.sqrt(v * v + 2.0 * GRAVITY * p)) / GRAVITY


class BouncingBall(EnvironmentModel):
    name = "bouncing_ball"
    dim = 2
    period = 0.1
    random_dims = 2

    def __init__(self, p_max: float = 15.0, v_max: float = 15.0):
        self.actions = (Action(NOHIT, "nohit"), Action(HIT, "hit"))
        self.p_max = float(p_max)
        self.v_max = float(v_max)
        self.lower = np.array([0.0, -self.v_max])
        self.upper = np.array([self.p_max, self.v_max])
        self.hit_height = 4.0
        self.dead_height = 0.01
        self.dead_speed = 1.0
        self.damp_lo = 0.97
        self.damp_hi = 0.85
        self.zeno_cap = 32
        self.hit_cost = 1.0
        self.death_cost = 1000.0
        self.time_limit = 120.0

    def config(self) -> dict:
        return {"name": self.name, "p_max": self.p_max, "v_max": self.v_max}

    def default_gamma(self) -> np.ndarray:
        return np.array([0.02, 0.02])

    def worst_case_draws(self) -> np.ndarray:
        # u_hit = 1: low-energy end of the hit interval (-0.9 v - 4);
        # u_damp = 1: damping factor exactly -0.85.
        return np.array([1.0, 1.0])

    # -- dynamics ---------------------------------------------------------

    def _apply_action(self, p, v, action, u_hit):
        if action != HIT:
            return v
        can = p >= self.hit_height
        slow_fall = can & (v <= 0.0) & (v >= -4.0)
        v[slow_fall] = -4.0
        rising = can & (v > 0.0)
        if np.any(rising):
            vr = v[rising]
            ur = u_hit[rising]
            # linear blend keeps the interval endpoints exact
            v[rising] = (-vr - 4.0) * (1.0 - ur) + (-0.9 * vr - 4.0) * ur
        return v

    def step(self, states, action, draws):
        states = np.asarray(states, dtype=np.float64)
        draws = np.asarray(draws, dtype=np.float64)
        p = states[:, 0].copy()
        v = self._apply_action(p, states[:, 1].copy(), action, draws[:, 0])
        damp = -(self.damp_lo * (1.0 - draws[:, 1]) + self.damp_hi * draws[:, 1])

        rem = np.full(p.shape, self.period)
        bounces = np.zeros(p.shape, dtype=np.int64)
        idx = np.arange(p.shape[0])
        while idx.size:
            pa = p[idx]
            va = v[idx]
            ra = rem[idx]
            tb = (va + np.sqrt(va * va + 2.0 * GRAVITY * np.maximum(pa, 0.0))) / GRAVITY
            hits = tb < ra
            dt = np.where(hits, tb, ra)
            pa2 = -0.5 * GRAVITY * dt * dt + va * dt + pa
            va2 = -GRAVITY * dt + va
            pa2 = np.maximum(pa2, 0.0)
            if np.any(hits):
                pa2[hits] = 0.0
                va2[hits] = va2[hits] * damp[idx[hits]]
                bounces[idx[hits]] += 1
            ra = ra - dt
            capped = bounces[idx] > self.zeno_cap
            if np.any(capped):
                pa2[capped] = 0.0
                va2[capped] = 0.0
                ra[capped] = 0.0
            p[idx] = pa2
            v[idx] = va2
            rem[idx] = ra
            idx = idx[ra > 0.0]
        return np.stack([p, v], axis=1)

    def step1(self, state, action, draws):
        p, v = float(state[0]), float(state[1])
        u_hit, u_damp = float(draws[0]), float(draws[1])
        if action == HIT and p >= self.hit_height:
            if -4.0 <= v <= 0.0:
                v = -4.0
            elif v > 0.0:
                v = (-v - 4.0) * (1.0 - u_hit) + (-0.9 * v - 4.0) * u_hit
        damp = -(self.damp_lo * (1.0 - u_damp) + self.damp_hi * u_damp)
        rem = self.period
        bounces = 0
        while rem > 0.0:
            pp = p if p > 0.0 else 0.0
            tb = (v + math.sqrt(v * v + 2.0 * GRAVITY * pp)) / GRAVITY
            if tb < rem:
                v = (-GRAVITY * tb + v) * damp
                p = 0.0
                rem = rem - tb
                bounces += 1
                if bounces > self.zeno_cap:
                    return (0.0, 0.0)
            else:
                p2 = -0.5 * GRAVITY * rem * rem + v * rem + p
                v = -GRAVITY * rem + v
                p = p2 if p2 > 0.0 else 0.0
                rem = 0.0
        return (p, v)

    # -- predicates and cost ----------------------------------------------

    def is_unsafe(self, states):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return (states[:, 0] <= self.dead_height) & (np.abs(states[:, 1]) <= self.dead_speed)

    def is_unsafe1(self, state):
        return state[0] <= self.dead_height and abs(state[1]) <= self.dead_speed

    def is_goal(self, states, t):
        goal = np.full(np.atleast_2d(states).shape[0], t >= self.time_limit)
        return goal | self.is_unsafe(states)

    def is_goal1(self, state, t):
        return t >= self.time_limit or self.is_unsafe1(state)

    def cost(self, states, action, next_states):
        n = np.atleast_2d(states).shape[0]
        c = np.full(n, self.hit_cost if action == HIT else 0.0)
        return c + self.death_cost * self.is_unsafe(next_states)

    def cost1(self, state, action, next_state):
        c = self.hit_cost if action == HIT else 0.0
        if self.is_unsafe1(next_state):
            c += self.death_cost
        return c

    # -- episodes and abstraction -------------------------------------------

    def initial_states(self, n, rng):
        out = np.zeros((n, 2))
        out[:, 0] = rng.uniform(7.0, 10.0, size=n)
        return out

    def safety_predicate(self):
        return SafetyPredicate(
            unsafe_boxes=[
                (
                    np.array([0.0, -self.dead_speed]),
                    np.array([self.dead_height, self.dead_speed]),
                )
            ]
        )
