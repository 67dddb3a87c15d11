"""
Leakage model: converts traced operations into region-local power.

Each event contributes ``alpha * HW(value) + beta`` (or ``alpha * HW(value ^
prev_value)`` in Hamming-distance mode) to the cell [time_idx][region_id].
Every cell, idle or not, also receives i.i.d. Gaussian noise.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from sclsim.dut.aes import EventSchedule, OpEvent
from sclsim.schemas import LeakageModelParams

logger = logging.getLogger(__name__)

HW_TABLE = np.array([bin(v).count("1") for v in range(256)], dtype=np.uint8)


@dataclass
class RegionPowerTrace:
    """Power per (time step, region) for one encryption."""
    n_steps: int
    n_regions: int
    values: np.ndarray
    plaintext: bytes = b""
    key: bytes = b""
    ciphertext: bytes = b""

    def __post_init__(self):
        if self.values.shape != (self.n_steps, self.n_regions):
            raise ValueError(f"values shape {self.values.shape} does not match ({self.n_steps}, {self.n_regions})")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("region power must be finite")


def hamming_weight(v: int) -> int:
    """Number of set bits of a byte."""
    if not 0 <= v <= 255:
        raise ValueError(f"hamming_weight expects a byte, got {v}")
    return int(v).bit_count()


def leakage_units(values: np.ndarray, prevs: np.ndarray, mode: str) -> np.ndarray:
    """Hamming weight (or distance) of every event byte as float64."""
    if mode == "hamming_distance":
        return HW_TABLE[np.bitwise_xor(values, prevs)].astype(np.float64)
    return HW_TABLE[values].astype(np.float64)


def emit_power_batch(
    values: np.ndarray,
    prevs: np.ndarray,
    schedule: EventSchedule,
    params: LeakageModelParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Vectorized power emission for a batch of traced encryptions.

    Args:
        values: (n, n_events) event output bytes
        prevs: (n, n_events) bytes overwritten by each event
        schedule: event schedule the columns follow
        params: leakage model parameters
        rng: generator for the electrical noise

    Returns:
        (n, n_steps, n_regions) float64 array of region power
    """
    n = values.shape[0]
    power = rng.normal(0.0, params.sigma_noise, size=(n, schedule.n_steps, schedule.n_regions))
    units = leakage_units(values, prevs, params.mode)
    power[:, schedule.time_idx, schedule.region_id] += params.alpha * units + params.beta
    return power


def emit_power(
    events: Sequence[OpEvent],
    params: LeakageModelParams,
    rng: np.random.Generator,
    *,
    n_regions: int,
    plaintext: bytes = b"",
    key: bytes = b"",
    ciphertext: bytes = b"",
) -> RegionPowerTrace:
    """Emit the power trace of one event stream."""
    n_steps = max((e.time_idx for e in events), default=-1) + 1
    values = rng.normal(0.0, params.sigma_noise, size=(n_steps, n_regions))
    for event in events:
        if event.region_id >= n_regions:
            raise ValueError(f"event region {event.region_id} outside floorplan of {n_regions} regions")
        data = event.value ^ event.prev_value if params.mode == "hamming_distance" else event.value
        values[event.time_idx, event.region_id] += params.alpha * hamming_weight(data) + params.beta
    return RegionPowerTrace(
        n_steps=n_steps,
        n_regions=n_regions,
        values=values,
        plaintext=plaintext,
        key=key,
        ciphertext=ciphertext,
    )
