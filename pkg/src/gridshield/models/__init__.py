"""Simulation models of the benchmark environments."""

from __future__ import annotations

from .base import Action, ConfigError, EnvironmentModel, step_all
from .bouncing_ball import HIT, NOHIT, BouncingBall, bb_bounce_time, bb_flow
from .extended import CruiseControl, DcdcConverter, OilPump
from .random_walk import FAST, SLOW, RandomWalk

MODEL_REGISTRY = {
    "bouncing_ball": BouncingBall,
    "random_walk": RandomWalk,
    "cruise_control": CruiseControl,
    "dcdc_converter": DcdcConverter,
    "oil_pump": OilPump,
}


def make_model(name: str, **params) -> EnvironmentModel:
    try:
        cls = MODEL_REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"unknown model {name!r}; choose from {sorted(MODEL_REGISTRY)}"
        ) from None
    return cls(**params)


__all__ = [
    "Action",
    "ConfigError",
    "EnvironmentModel",
    "step_all",
    "BouncingBall",
    "RandomWalk",
    "CruiseControl",
    "DcdcConverter",
    "OilPump",
    "bb_flow",
    "bb_bounce_time",
    "make_model",
    "MODEL_REGISTRY",
    "NOHIT",
    "HIT",
    "SLOW",
    "FAST",
]
