"""Config loading, simulation engines, orchestration and run artifacts."""

from sclsim.pipeline.artifacts import RunContext, load_report, write_report
from sclsim.pipeline.config import check_mode, config_from_flat, env_overrides, load_config, parse_config_text
from sclsim.pipeline.runner import (
    RunOutcome,
    SimulationPipeline,
    execute_attack,
    execute_calibration,
    execute_closed_loop,
    execute_sweep,
    median_mtd,
    run_attack_sweep,
    run_calibration,
    run_closed_loop,
    sweep_grid,
)
from sclsim.pipeline.simulation import REGIMES, ClosedLoopSimulator, SimulationOutcome, simulate_calibration
from sclsim.pipeline.world import STREAM_NAMES, DutSource, Layout, build_countermeasures, build_layout, spawn_streams

__all__ = [
    "REGIMES",
    "STREAM_NAMES",
    "ClosedLoopSimulator",
    "DutSource",
    "Layout",
    "RunContext",
    "RunOutcome",
    "SimulationOutcome",
    "SimulationPipeline",
    "build_countermeasures",
    "build_layout",
    "check_mode",
    "config_from_flat",
    "env_overrides",
    "execute_attack",
    "execute_calibration",
    "execute_closed_loop",
    "execute_sweep",
    "load_config",
    "load_report",
    "median_mtd",
    "parse_config_text",
    "run_attack_sweep",
    "run_calibration",
    "run_closed_loop",
    "simulate_calibration",
    "spawn_streams",
    "sweep_grid",
    "write_report",
]
