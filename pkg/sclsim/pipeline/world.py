"""
Everything a run needs before the first trace: the static layout (floorplan,
sensor lattice, ACC wiring, event schedule), the named random streams, the
DUT trace source and the countermeasure bank.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Tuple

import numpy as np
from pydantic import ValidationError

from sclsim.controller.mapping import build_sensor_acc_map
from sclsim.countermeasures.cells import CountermeasureBank, armed_summary
from sclsim.dut.aes import EventSchedule, event_schedule, trace_batch
from sclsim.dut.leakage import emit_power_batch
from sclsim.exceptions import ConfigError
from sclsim.floorplan.grid import floorplan_from_config, place_sensors_even
from sclsim.floorplan.sensors import attenuation_matrix, window_bounds
from sclsim.schemas import ExperimentConfig, Floorplan, SensorAccMap, SensorPlacement
from sclsim.utils import format_validation_errors

logger = logging.getLogger(__name__)

# Order matters: stream i is child i of SeedSequence(seed).
STREAM_NAMES = ("plaintexts", "dut_noise", "sensor_jitter", "countermeasure", "attacker", "calibration")


def spawn_streams(seed: int) -> Dict[str, np.random.Generator]:
    """One independent generator per concern, all derived from the run seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(child) for name, child in zip(STREAM_NAMES, children)}


@dataclass
class Layout:
    """Static, seed-independent structure of an experiment."""
    floorplan: Floorplan
    placements: List[SensorPlacement]
    attenuation: np.ndarray
    schedule: EventSchedule
    acc_map: SensorAccMap
    window_starts: np.ndarray
    window_lengths: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.schedule.n_steps

    @property
    def n_windows(self) -> int:
        return len(self.window_starts)

    @property
    def n_sensors(self) -> int:
        return len(self.placements)

    @property
    def n_regions(self) -> int:
        return self.floorplan.n_regions

    @property
    def n_accs(self) -> int:
        return self.acc_map.n_accs


def build_layout(config: ExperimentConfig) -> Layout:
    """
    Build floorplan, sensors and wiring from a config.

    Raises:
        ConfigError: the floorplan section describes an invalid floorplan
        NotPerfectSquare, GridTooSmall: the sensor lattice cannot be placed
        UnmappedSensor: explicit wiring leaves a sensor without an ACC
    """
    try:
        floorplan = floorplan_from_config(config.floorplan)
    except ValidationError as e:
        key_path, message = format_validation_errors(e)[0]
        raise ConfigError(message, f"floorplan.{key_path}" if key_path else "floorplan") from None
    placements = place_sensors_even(floorplan.width, floorplan.height, config.sensors.n_sensors)
    acc_map = build_sensor_acc_map(floorplan, placements, config.controller.explicit_map())
    schedule = event_schedule(floorplan)
    starts, lengths = window_bounds(schedule.n_steps, config.sensors.window)
    return Layout(
        floorplan=floorplan,
        placements=placements,
        attenuation=attenuation_matrix(floorplan, placements, config.sensors.kernel),
        schedule=schedule,
        acc_map=acc_map,
        window_starts=starts,
        window_lengths=lengths,
    )


class DutSource:
    """Plaintexts and raw region power of consecutive encryptions, produced in chunks."""

    def __init__(
        self,
        config: ExperimentConfig,
        layout: Layout,
        plaintext_rng: np.random.Generator,
        noise_rng: np.random.Generator,
        alternate_fixed: bool = False,
    ):
        """
        Args:
            config: experiment config (key, leakage model, chunk size)
            layout: static layout with the event schedule
            plaintext_rng: generator for random plaintexts
            noise_rng: generator for the electrical noise
            alternate_fixed: even trace indices use the fixed plaintext
        """
        self.key = config.key_bytes
        self.fixed = np.frombuffer(config.fixed_plaintext_bytes, dtype=np.uint8)
        self.leakage = config.leakage
        self.chunk_size = config.harness.chunk_size
        self.schedule = layout.schedule
        self.plaintext_rng = plaintext_rng
        self.noise_rng = noise_rng
        self.alternate_fixed = alternate_fixed

    def chunks(self, n_traces: int) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
        """Yield (first trace index, plaintexts (n, 16), region power (n, n_steps, n_regions))."""
        for start in range(0, n_traces, self.chunk_size):
            n = min(self.chunk_size, n_traces - start)
            plaintexts = self.plaintext_rng.integers(0, 256, size=(n, 16), dtype=np.uint8)
            if self.alternate_fixed:
                plaintexts[(np.arange(start, start + n) % 2) == 0] = self.fixed
            _, values, prevs = trace_batch(plaintexts, self.key)
            yield start, plaintexts, emit_power_batch(values, prevs, self.schedule, self.leakage, self.noise_rng)


def region_means(config: ExperimentConfig, layout: Layout, rng: np.random.Generator, n_traces: int) -> np.ndarray:
    """Mean power per region over n_traces random-plaintext encryptions."""
    totals = np.zeros(layout.n_regions)
    for _, _, power in DutSource(config, layout, rng, rng).chunks(n_traces):
        totals += power.sum(axis=(0, 1))
    return totals / (n_traces * layout.n_steps)


def build_countermeasures(
    config: ExperimentConfig,
    layout: Layout,
    calibration_rng: np.random.Generator,
) -> CountermeasureBank:
    """Arm the ACCs; equalizers without a fixed target get per-region calibration means."""
    bank = CountermeasureBank.from_config(
        config.countermeasure, layout.acc_map, layout.n_regions, layout.n_steps, config.sensors.window
    )
    logger.debug(f"armed cells: {armed_summary(bank)}")
    if bank.needs_targets and config.countermeasure.target is None:
        n = config.countermeasure.calibration_traces
        logger.info(f"calibrating equalizer targets on {n} traces")
        bank = CountermeasureBank.from_config(
            config.countermeasure,
            layout.acc_map,
            layout.n_regions,
            layout.n_steps,
            config.sensors.window,
            region_means=region_means(config, layout, calibration_rng, n),
        )
    return bank
