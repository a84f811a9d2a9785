"""Parameterized re-implementations of the three benchmark environments.

The dynamics follow the published qualitative descriptions (a car following
another car, a boost converter holding 15 V +- 0.5 V, an oil accumulator with
a 20 s consumption cycle and a 2 s pump-off latency); the numeric rates are
documented defaults of this package, not the original case studies'
constants.

Continuous-dynamics models integrate with fixed-step RK4 at 100 substeps per
control period.  Clamped quantities are clamped a hair inside the half-open
state box so that saturated states remain in the partition domain.
"""

from __future__ import annotations

import numpy as np

from ..safety_game import SafetyPredicate
from .base import Action, ConfigError, EnvironmentModel

RK4_SUBSTEPS = 100
CLAMP_MARGIN = 1e-9


def _rk4(deriv, y, dt, substeps=RK4_SUBSTEPS):
    h = dt / substeps
    for _ in range(substeps):
        k1 = deriv(y)
        k2 = deriv(y + 0.5 * h * k1)
        k3 = deriv(y + 0.5 * h * k2)
        k4 = deriv(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


# ---------------------------------------------------------------------------
# cruise control
# ---------------------------------------------------------------------------

DECEL = 0
KEEP = 1
ACCEL = 2


class CruiseControl(EnvironmentModel):
    """Ego car following a front car; both pick accelerate / keep / decelerate.

    State ``(v_front, v_ego, distance)``.  Velocity changes are impulses of
    ``accel_step`` m/s applied at the period start, then the gap integrates
    the velocity difference for one period.  The front car's choice is the
    single random draw (thirds of the unit interval); the worst case is the
    front car braking.  Crash when the distance reaches zero.
    """

    name = "cruise_control"
    dim = 3
    period = 1.0
    random_dims = 1

    def __init__(
        self,
        v_min: float = -8.0,
        v_max: float = 20.0,
        d_max: float = 200.0,
        d_crash_margin: float = 30.0,
        accel_step: float = 2.0,
    ):
        if accel_step <= 0:
            raise ConfigError("accel_step must be positive")
        if v_min >= v_max or d_max <= 0 or d_crash_margin <= 0:
            raise ConfigError("inverted velocity or distance bounds")
        self.actions = (Action(DECEL, "decel"), Action(KEEP, "keep"), Action(ACCEL, "accel"))
        self.v_min = float(v_min)
        self.v_max = float(v_max)
        self.d_max = float(d_max)
        self.accel_step = float(accel_step)
        self.crash_cost = 1000.0
        # the crash band below d = 0 keeps one full closing step in-domain
        self.lower = np.array([v_min, v_min, -float(d_crash_margin)])
        self.upper = np.array([v_max, v_max, float(d_max)])

    def config(self) -> dict:
        return {
            "name": self.name,
            "v_min": self.v_min,
            "v_max": self.v_max,
            "d_max": self.d_max,
            "accel_step": self.accel_step,
        }

    def default_gamma(self) -> np.ndarray:
        return np.array([2.0, 2.0, 5.0])

    def worst_case_draws(self) -> np.ndarray:
        return np.array([0.0])  # front car brakes

    def _clamp_v(self, v):
        return np.clip(v, self.v_min, self.v_max - CLAMP_MARGIN)

    def step(self, states, action, draws):
        states = np.asarray(states, dtype=np.float64)
        draws = np.asarray(draws, dtype=np.float64)
        vf, ve, d = states[:, 0], states[:, 1], states[:, 2]
        front_choice = np.minimum((draws[:, 0] * 3.0).astype(np.int64), 2)
        dv_front = (front_choice - 1) * self.accel_step
        dv_ego = (action - 1) * self.accel_step
        vf2 = self._clamp_v(vf + dv_front)
        ve2 = self._clamp_v(ve + dv_ego)
        d2 = d + (vf2 - ve2) * self.period
        d2 = np.clip(d2, self.lower[2], self.d_max - CLAMP_MARGIN)
        return np.stack([vf2, ve2, d2], axis=1)

    def step1(self, state, action, draws):
        vf, ve, d = state
        choice = min(int(float(draws[0]) * 3.0), 2)
        vf2 = min(max(vf + (choice - 1) * self.accel_step, self.v_min), self.v_max - CLAMP_MARGIN)
        ve2 = min(max(ve + (action - 1) * self.accel_step, self.v_min), self.v_max - CLAMP_MARGIN)
        d2 = d + (vf2 - ve2) * self.period
        d2 = min(max(d2, self.lower[2]), self.d_max - CLAMP_MARGIN)
        return (vf2, ve2, d2)

    def is_unsafe(self, states):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return states[:, 2] <= 0.0

    def is_unsafe1(self, state):
        return state[2] <= 0.0

    def is_goal(self, states, t):
        return np.zeros(np.atleast_2d(states).shape[0], dtype=bool)

    def is_goal1(self, state, t):
        return False

    def cost(self, states, action, next_states):
        next_states = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
        c = np.maximum(next_states[:, 2], 0.0) * self.period
        return c + self.crash_cost * self.is_unsafe(next_states)

    def cost1(self, state, action, next_state):
        c = max(next_state[2], 0.0) * self.period
        if self.is_unsafe1(next_state):
            c += self.crash_cost
        return c

    def initial_states(self, n, rng):
        out = np.zeros((n, 3))
        out[:, 2] = rng.uniform(40.0, 60.0, size=n)
        return out

    def safety_predicate(self):
        return SafetyPredicate(
            unsafe_boxes=[
                (
                    np.array([self.v_min, self.v_min, self.lower[2]]),
                    np.array([self.v_max, self.v_max, 0.0]),
                )
            ]
        )


# ---------------------------------------------------------------------------
# DC-DC boost converter
# ---------------------------------------------------------------------------

CHARGE = 0
DISCHARGE = 1


class DcdcConverter(EnvironmentModel):
    """Boost converter regulating 10 V input to a 15 V output.

    State ``(i_l, v_c)``: inductor current and output voltage.  ``charge``
    stores energy in the inductor while the capacitor feeds the load alone;
    ``discharge`` routes the inductor into the output.  The output must stay
    within ``15 +- 0.5`` V.  The single random draw perturbs the load
    resistance; the worst case is the heaviest load (fastest droop).

    Initial states are drawn inside the regulation band, standing in for a
    startup grace period.
    """

    name = "dcdc_converter"
    dim = 2
    period = 0.002
    random_dims = 1

    def __init__(
        self,
        v_in: float = 10.0,
        v_ref: float = 15.0,
        band: float = 0.5,
        inductance: float = 0.01,
        capacitance: float = 0.005,
        resistance: float = 30.0,
        load_noise: float = 0.2,
        i_max: float = 8.0,
        v_max: float = 18.0,
    ):
        if min(inductance, capacitance, resistance, v_in) <= 0:
            raise ConfigError("component values must be positive")
        if band <= 0 or v_ref - band <= 0 or v_ref + band >= v_max:
            raise ConfigError("inverted or out-of-range voltage band")
        self.actions = (Action(CHARGE, "charge"), Action(DISCHARGE, "discharge"))
        self.v_in = float(v_in)
        self.v_ref = float(v_ref)
        self.band = float(band)
        self.L = float(inductance)
        self.C = float(capacitance)
        self.R = float(resistance)
        self.load_noise = float(load_noise)
        self.violation_cost = 1000.0
        self.lower = np.array([0.0, 0.0])
        self.upper = np.array([float(i_max), float(v_max)])

    def config(self) -> dict:
        return {
            "name": self.name,
            "v_in": self.v_in,
            "v_ref": self.v_ref,
            "band": self.band,
            "L": self.L,
            "C": self.C,
            "R": self.R,
            "load_noise": self.load_noise,
        }

    def default_gamma(self) -> np.ndarray:
        return np.array([0.5, 0.05])

    def worst_case_draws(self) -> np.ndarray:
        return np.array([0.0])  # lowest load resistance

    def step(self, states, action, draws):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        draws = np.atleast_2d(np.asarray(draws, dtype=np.float64))
        r_eff = self.R * (1.0 + self.load_noise * (2.0 * draws[:, 0] - 1.0))

        if action == CHARGE:

            def deriv(y):
                di = np.full(y.shape[0], self.v_in / self.L)
                dv = -y[:, 1] / (r_eff * self.C)
                return np.stack([di, dv], axis=1)

        else:

            def deriv(y):
                di = (self.v_in - y[:, 1]) / self.L
                dv = (y[:, 0] - y[:, 1] / r_eff) / self.C
                # ideal diode: current cannot go negative
                di = np.where((y[:, 0] <= 0.0) & (di < 0.0), 0.0, di)
                return np.stack([di, dv], axis=1)

        out = _rk4(deriv, states, self.period)
        out[:, 0] = np.clip(out[:, 0], 0.0, self.upper[0] - CLAMP_MARGIN)
        out[:, 1] = np.clip(out[:, 1], 0.0, self.upper[1] - CLAMP_MARGIN)
        return out

    def is_unsafe(self, states):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return np.abs(states[:, 1] - self.v_ref) > self.band

    def is_goal(self, states, t):
        return np.zeros(np.atleast_2d(states).shape[0], dtype=bool)

    def cost(self, states, action, next_states):
        next_states = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
        c = np.abs(next_states[:, 1] - self.v_ref)
        return c + self.violation_cost * self.is_unsafe(next_states)

    def initial_states(self, n, rng):
        out = np.empty((n, 2))
        out[:, 0] = rng.uniform(0.3, 0.7, size=n)
        out[:, 1] = rng.uniform(self.v_ref - 0.2, self.v_ref + 0.2, size=n)
        return out

    def safety_predicate(self):
        lo_band = self.v_ref - self.band
        hi_band = self.v_ref + self.band
        return SafetyPredicate(
            unsafe_boxes=[
                (np.array([self.lower[0], self.lower[1]]), np.array([self.upper[0], lo_band])),
                (np.array([self.lower[0], hi_band]), np.array([self.upper[0], self.upper[1]])),
            ],
            holds_fn=lambda s: ~self.is_unsafe(s),
        )


# ---------------------------------------------------------------------------
# oil pump
# ---------------------------------------------------------------------------

PUMP_OFF = 0
PUMP_ON = 1

# (start, end, rate) segments of the 20 s consumption cycle; zero elsewhere
DEFAULT_CONSUMPTION = (
    (2.0, 4.0, 1.2),
    (8.0, 10.0, 1.2),
    (10.0, 12.0, 2.5),
    (14.0, 16.0, 1.7),
    (16.0, 18.0, 0.5),
)


class OilPump(EnvironmentModel):
    """Accumulator fed by a switchable pump against a periodic consumer.

    State ``(c, vol, off_time)``: position in the 20 s consumption cycle,
    oil volume, and time the pump has been continuously off (0 while the
    pump runs, capped at the 2 s latency).  Turning the pump back on is only
    possible after it has been off for the full latency, so choosing ``on``
    during the lock-out acts as ``off``.  Consumption is perturbed by the
    single random draw; the worst case is maximal consumption.
    """

    name = "oil_pump"
    dim = 3
    period = 0.2
    random_dims = 1

    def __init__(
        self,
        pump_rate: float = 2.2,
        v_min: float = 4.9,
        v_max: float = 25.1,
        v_cap: float = 30.0,
        cycle: float = 20.0,
        latency: float = 2.0,
        noise: float = 0.25,
        consumption=DEFAULT_CONSUMPTION,
    ):
        if pump_rate <= 0:
            raise ConfigError("pump_rate must be positive")
        if v_min >= v_max or v_max >= v_cap:
            raise ConfigError("inverted volume bounds")
        self.actions = (Action(PUMP_OFF, "off"), Action(PUMP_ON, "on"))
        self.pump_rate = float(pump_rate)
        self.v_min = float(v_min)
        self.v_max = float(v_max)
        self.cycle = float(cycle)
        self.latency = float(latency)
        self.noise = float(noise)
        self.consumption = tuple((float(a), float(b), float(r)) for a, b, r in consumption)
        self.violation_cost = 1000.0
        self.lower = np.array([0.0, 0.0, 0.0])
        self.upper = np.array([self.cycle, float(v_cap), self.latency + 0.5])

    def config(self) -> dict:
        return {
            "name": self.name,
            "pump_rate": self.pump_rate,
            "v_min": self.v_min,
            "v_max": self.v_max,
            "latency": self.latency,
            "noise": self.noise,
            "consumption": [list(seg) for seg in self.consumption],
        }

    def default_gamma(self) -> np.ndarray:
        return np.array([0.5, 0.5, 0.5])

    def worst_case_draws(self) -> np.ndarray:
        return np.array([1.0])  # maximal consumption

    def consumption_rate(self, c):
        c = np.asarray(c, dtype=np.float64)
        rate = np.zeros_like(c)
        for start, end, r in self.consumption:
            rate[(c >= start) & (c < end)] = r
        return rate

    def step(self, states, action, draws):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        draws = np.atleast_2d(np.asarray(draws, dtype=np.float64))
        c, vol, off_t = states[:, 0], states[:, 1], states[:, 2]
        can_turn_on = (off_t <= 0.0) | (off_t >= self.latency)
        pump_on = (action == PUMP_ON) & can_turn_on
        rate = self.consumption_rate(c) * (1.0 + self.noise * (2.0 * draws[:, 0] - 1.0))
        vol2 = vol + (self.pump_rate * pump_on - rate) * self.period
        vol2 = np.clip(vol2, 0.0, self.upper[1] - CLAMP_MARGIN)
        c2 = c + self.period
        c2 = np.where(c2 >= self.cycle, c2 - self.cycle, c2)
        off2 = np.where(pump_on, 0.0, np.minimum(off_t + self.period, self.latency))
        return np.stack([c2, vol2, off2], axis=1)

    def is_unsafe(self, states):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return (states[:, 1] <= self.v_min) | (states[:, 1] >= self.v_max)

    def is_goal(self, states, t):
        return np.zeros(np.atleast_2d(states).shape[0], dtype=bool)

    def cost(self, states, action, next_states):
        next_states = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
        c = next_states[:, 1] * self.period
        return c + self.violation_cost * self.is_unsafe(next_states)

    def initial_states(self, n, rng):
        out = np.zeros((n, 3))
        out[:, 1] = rng.uniform(9.0, 11.0, size=n)
        out[:, 2] = self.latency
        return out

    def safety_predicate(self):
        def holds(states):
            return ~self.is_unsafe(states)

        return SafetyPredicate(
            unsafe_boxes=[
                (self.lower.copy(), np.array([self.cycle, self.v_min, self.upper[2]])),
                (
                    np.array([0.0, self.v_max, 0.0]),
                    self.upper.copy(),
                ),
            ],
            holds_fn=holds,
        )
