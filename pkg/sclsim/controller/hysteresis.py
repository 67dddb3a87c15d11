"""
Adaptive countermeasure controller.

Each ACC runs a two-threshold hysteresis machine: it turns on when the score
of a sensor feeding it reaches th_high and turns off once that score drops
strictly below th_low. Scores in between never change the mode.
"""

import math
from dataclasses import dataclass, replace
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from sclsim.detection.statistics import LeakageScore
from sclsim.exceptions import InvalidThresholds, UnmappedSensor
from sclsim.schemas import ControllerEvent, SensorAccMap

OFF = "off"
ON = "on"
ACTIVATED = "activated"
DEACTIVATED = "deactivated"


@dataclass(frozen=True, slots=True)
class HysteresisState:
    mode: str = OFF
    th_low: float = 2.0
    th_high: float = 4.5

    def __post_init__(self):
        if self.mode not in (OFF, ON):
            raise ValueError(f"unknown mode '{self.mode}'")
        for name, value in (("th_low", self.th_low), ("th_high", self.th_high)):
            if not math.isfinite(value) or value < 0:
                raise InvalidThresholds(f"{name}={value} must be finite and >= 0")
        if self.th_low >= self.th_high:
            raise InvalidThresholds(f"th_low ({self.th_low}) must be below th_high ({self.th_high})")

    @property
    def is_on(self) -> bool:
        return self.mode == ON


def hysteresis_step(state: HysteresisState, score: float) -> Tuple[HysteresisState, Optional[str]]:
    """Advance one ACC by one score; returns the new state and the transition, if any."""
    if not math.isfinite(score):
        raise ValueError(f"score must be finite, got {score}")
    if state.mode == OFF:
        if score >= state.th_high:
            return replace(state, mode=ON), ACTIVATED
    elif score < state.th_low:
        return replace(state, mode=OFF), DEACTIVATED
    return state, None


def initial_states(n_accs: int, th_low: float, th_high: float) -> List[HysteresisState]:
    return [HysteresisState(OFF, th_low, th_high) for _ in range(n_accs)]


def active_regions(states: Sequence[HysteresisState], acc_map: SensorAccMap) -> FrozenSet[int]:
    return frozenset(r for acc_id, st in enumerate(states) if st.is_on for r in acc_map.acc_regions[acc_id])


def controller_tick(
    scores: Sequence[LeakageScore],
    states: Sequence[HysteresisState],
    acc_map: SensorAccMap,
    window_idx: int,
) -> Tuple[List[HysteresisState], List[ControllerEvent], FrozenSet[int]]:
    """
    Step every ACC on the maximum score of the sensors feeding it.

    Args:
        scores: scores produced this window (sensors without a score are absent)
        states: per-ACC state, indexed by acc_id
        acc_map: sensor -> ACC wiring
        window_idx: global window index recorded on events

    Returns:
        Tuple of (new states, events ordered by acc_id, active region set)

    Raises:
        UnmappedSensor: a scored sensor has no ACC
    """
    best: dict = {}
    for s in scores:
        acc_id = acc_map.sensor_to_acc.get(s.sensor_id)
        if acc_id is None:
            raise UnmappedSensor(f"sensor {s.sensor_id} is not wired to any ACC")
        current = best.get(acc_id)
        if current is None or s.value > current.value or (s.value == current.value and s.sensor_id < current.sensor_id):
            best[acc_id] = s

    new_states = list(states)
    events: List[ControllerEvent] = []
    for acc_id in sorted(best):
        top = best[acc_id]
        new_states[acc_id], transition = hysteresis_step(states[acc_id], top.value)
        if transition is not None:
            events.append(ControllerEvent(
                window_idx=window_idx,
                sensor_id=top.sensor_id,
                acc_id=acc_id,
                transition=transition,
                score=top.value,
            ))
    return new_states, events, active_regions(new_states, acc_map)


def first_transition(acc_scores: np.ndarray, states: Sequence[HysteresisState]) -> Optional[int]:
    """
    Earliest column at which any ACC would change mode, holding modes fixed.

    Args:
        acc_scores: (n_accs, L) per-ACC scores over upcoming windows, NaN = no score
        states: current per-ACC states

    Returns:
        Column index of the first transition, or None
    """
    on = np.array([st.is_on for st in states])
    low = np.array([st.th_low for st in states])[:, None]
    high = np.array([st.th_high for st in states])[:, None]
    with np.errstate(invalid="ignore"):
        crossing = np.where(on[:, None], acc_scores < low, acc_scores >= high)
    hits = crossing.any(axis=1)
    if not hits.any():
        return None
    return int(np.argmax(crossing, axis=1)[hits].min())
