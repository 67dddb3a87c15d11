"""Hysteresis controller driving the adaptive countermeasure cells."""

from sclsim.controller.hysteresis import (
    ACTIVATED,
    DEACTIVATED,
    OFF,
    ON,
    HysteresisState,
    active_regions,
    controller_tick,
    first_transition,
    hysteresis_step,
    initial_states,
)
from sclsim.controller.mapping import build_sensor_acc_map

__all__ = [
    "ACTIVATED",
    "DEACTIVATED",
    "OFF",
    "ON",
    "HysteresisState",
    "active_regions",
    "build_sensor_acc_map",
    "controller_tick",
    "first_transition",
    "hysteresis_step",
    "initial_states",
]
