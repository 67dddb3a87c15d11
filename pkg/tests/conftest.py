"""Shared fixtures: small experiment configs and seeded generators."""

from typing import Callable, Dict, Optional

import numpy as np
import pytest

from sclsim.floorplan.grid import build_floorplan
from sclsim.pipeline.config import config_from_flat
from sclsim.schemas import ExperimentConfig, Floorplan

KEY = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")

# Small enough for unit-speed runs: 30 windows of 16 steps per trace.
FAST_CONFIG: Dict[str, str] = {
    "seed": "7",
    "n_traces": "40",
    "sensors.window": "16",
    "detector.min_samples": "8",
    "harness.chunk_size": "16",
    "harness.export_limit": "4",
    "countermeasure.calibration_traces": "16",
    "attack.max_traces": "64",
    "attack.step": "16",
}


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def floorplan() -> Floorplan:
    """4x4 grid, one region per cell, byte b of every operation in region b."""
    return build_floorplan(4, 4)


@pytest.fixture
def make_config() -> Callable[..., ExperimentConfig]:
    """Build a validated config from FAST_CONFIG plus dotted-key overrides."""

    def _make(overrides: Optional[Dict[str, str]] = None, **top: str) -> ExperimentConfig:
        flat = {**FAST_CONFIG, **{k: str(v) for k, v in top.items()}}
        flat.update({k: str(v) for k, v in (overrides or {}).items()})
        return config_from_flat(flat)

    return _make
