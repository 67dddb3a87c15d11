"""
Pipeline runner that orchestrates calibration, closed-loop, attack and sweep runs.

This module coordinates:
1. Run cache lookup and run directory setup
2. Per-run logging and validation hooks
3. The simulation itself (one mode per command)
4. Report and CSV artifacts

Sweeps fan the threshold grid out over an asyncio worker pool; every grid
point is independent and results are merged in grid order, so the report does
not depend on the number of workers.
"""

import asyncio
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn, TimeElapsedColumn

from sclsim.attack.cpa import AttackTraceSet, cpa_rank, measurements_to_disclosure
from sclsim.cache import CacheManager, config_digest, make_run_id
from sclsim.exceptions import AllColumnsDegenerate, ConfigError, InsufficientSamples
from sclsim.hooks import HookManager, LoggingManager, RunLogger, create_run_hooks
from sclsim.pipeline.artifacts import (
    RunContext,
    load_report,
    write_events,
    write_frontier,
    write_guesses,
    write_readings,
    write_region_traces,
    write_report,
    write_scores,
)
from sclsim.pipeline.config import check_mode
from sclsim.pipeline.simulation import (
    REGIMES,
    ClosedLoopSimulator,
    SimulationOutcome,
    TraceExports,
    simulate_calibration,
)
from sclsim.pipeline.world import Layout, build_countermeasures, build_layout, spawn_streams
from sclsim.schemas import (
    AttackResult,
    CalibrationResult,
    ExperimentConfig,
    FrontierRow,
    KeyRankResult,
    OverheadReport,
    Regime,
    RegimeResult,
    RunReport,
)

logger = logging.getLogger(__name__)
console = Console()


@dataclass
class RunOutcome:
    """A report plus the bulk data its artifacts are written from."""
    report: RunReport
    exports: Optional[TraceExports] = None
    captures: Dict[str, AttackTraceSet] = field(default_factory=dict)
    guesses: Dict[str, KeyRankResult] = field(default_factory=dict)


def _require_mode(config: ExperimentConfig, *modes: str) -> None:
    if config.mode not in modes:
        raise ConfigError(f"expected {' or '.join(modes)}, got {config.mode}", "mode")
    check_mode(config)


def _finish(report: RunReport, hooks: Optional[HookManager], extra_violations: int = 0) -> RunReport:
    if hooks is not None:
        hooks.fire("on_run_complete", report=report)
        extra_violations += hooks.violations
    return report.model_copy(update={"hook_violations": extra_violations})


def _validation_hooks(mode: str, th_high: float) -> HookManager:
    return HookManager(mode, run_logger=None, th_high=th_high)


def median_mtd(values: Sequence[Optional[int]]) -> Optional[int]:
    """Lower median of MTD values; NotDisclosed (None) ranks above every trace count."""
    ordered = sorted(values, key=lambda v: (v is None, v or 0))
    return ordered[(len(ordered) - 1) // 2]


# ============================================================================
# CALIBRATION AND CLOSED LOOP
# ============================================================================

def execute_calibration(config: ExperimentConfig, hooks: Optional[HookManager] = None) -> RunOutcome:
    _require_mode(config, "calibrate")
    layout = build_layout(config)
    outcome = simulate_calibration(config, layout, spawn_streams(config.seed))
    total_windows = outcome.n_traces * outcome.windows_per_trace
    report = RunReport(
        mode="calibrate",
        seed=config.seed,
        config=config,
        n_traces=outcome.n_traces,
        windows_per_trace=outcome.windows_per_trace,
        total_windows=total_windows,
        sensor_scores=outcome.sensor_scores,
        overhead=OverheadReport(windows_active=[0] * layout.n_accs, total_windows=total_windows),
        calibration=CalibrationResult(
            series=outcome.series,
            first_crossing=outcome.first_crossing,
            region_means=outcome.region_means,
        ),
    )
    return RunOutcome(report=_finish(report, hooks), exports=outcome.exports)


def execute_closed_loop(config: ExperimentConfig, hooks: Optional[HookManager] = None) -> RunOutcome:
    _require_mode(config, "run")
    layout = build_layout(config)
    streams = spawn_streams(config.seed)
    bank = build_countermeasures(config, layout, streams["calibration"])
    outcome = ClosedLoopSimulator(config, layout, bank, streams, hooks=hooks).run(config.n_traces)
    report = RunReport(
        mode="run",
        seed=config.seed,
        config=config,
        n_traces=outcome.n_traces,
        windows_per_trace=outcome.windows_per_trace,
        total_windows=outcome.overhead.total_windows,
        sensor_scores=outcome.sensor_scores,
        events=outcome.events,
        overhead=outcome.overhead,
    )
    return RunOutcome(report=_finish(report, hooks), exports=outcome.exports, captures={"adaptive": outcome.capture})


def run_calibration(config: ExperimentConfig, hooks: Optional[HookManager] = None) -> RunReport:
    """Fixed-vs-random TVLA campaign; countermeasures stay disabled."""
    return execute_calibration(config, hooks).report


def run_closed_loop(config: ExperimentConfig, hooks: Optional[HookManager] = None) -> RunReport:
    """Closed detect-and-mitigate loop over config.n_traces encryptions."""
    return execute_closed_loop(config, hooks).report


# ============================================================================
# ATTACK REGIMES AND SWEEP
# ============================================================================

def simulate_replicate(
    config: ExperimentConfig,
    layout: Layout,
    regime: Regime,
    replicate: int,
    *,
    th_low: Optional[float] = None,
    th_high: Optional[float] = None,
    hooks: Optional[HookManager] = None,
) -> SimulationOutcome:
    """One attacker campaign of attack.max_traces encryptions under seed XOR replicate."""
    streams = spawn_streams(config.seed ^ replicate)
    bank = build_countermeasures(config, layout, streams["calibration"])
    simulator = ClosedLoopSimulator(
        config, layout, bank, streams, regime=regime, th_low=th_low, th_high=th_high, hooks=hooks
    )
    return simulator.run(config.attack.max_traces)


def disclosure(config: ExperimentConfig, capture: AttackTraceSet) -> Optional[int]:
    attack = config.attack
    true_key = config.key_bytes[attack.byte_index]
    return measurements_to_disclosure(capture, attack.byte_index, true_key, attack.step, attack.max_traces)


def final_rank(config: ExperimentConfig, capture: AttackTraceSet) -> Optional[KeyRankResult]:
    """CPA on every trace up to the last checkpoint; None when nothing can be ranked."""
    attack = config.attack
    n = (min(attack.max_traces, capture.n_traces) // attack.step) * attack.step
    if n == 0:
        return None
    try:
        return cpa_rank(capture.rows(0, n), attack.byte_index, config.key_bytes[attack.byte_index])
    except (AllColumnsDegenerate, InsufficientSamples) as e:
        logger.info(f"no final rank: {e}")
        return None


def execute_attack(config: ExperimentConfig, hooks: Optional[HookManager] = None) -> RunOutcome:
    """Measurements-to-disclosure under the off, forced and adaptive regimes."""
    _require_mode(config, "attack")
    layout = build_layout(config)
    th_high = config.controller.th_high
    results: List[RegimeResult] = []
    captures: Dict[str, AttackTraceSet] = {}
    guesses: Dict[str, KeyRankResult] = {}
    adaptive: Optional[SimulationOutcome] = None
    violations = 0

    for regime in REGIMES:
        mtds: List[Optional[int]] = []
        energies: List[float] = []
        activations: List[int] = []
        ranked: Optional[KeyRankResult] = None
        for r in range(config.sweep.replicates):
            primary = regime == "adaptive" and r == 0
            sim_hooks = hooks if primary else _validation_hooks("attack", th_high)
            outcome = simulate_replicate(config, layout, regime, r, hooks=sim_hooks)
            if not primary:
                violations += sim_hooks.violations
            mtds.append(disclosure(config, outcome.capture))
            energies.append(outcome.overhead.extra_energy)
            activations.append(outcome.activations)
            if r == 0:
                captures[regime] = outcome.capture
                ranked = final_rank(config, outcome.capture)
                if ranked is not None:
                    guesses[regime] = ranked
            if primary:
                adaptive = outcome
        logger.info(f"{regime}: mtd per replicate {mtds}")
        results.append(RegimeResult(
            regime=regime,
            mtd=median_mtd(mtds),
            mtd_replicates=mtds,
            final_rank=None if ranked is None else ranked.rank_of_true_key,
            extra_energy=float(np.median(energies)),
            activations=float(np.median(activations)),
        ))

    report = RunReport(
        mode="attack",
        seed=config.seed,
        config=config,
        n_traces=adaptive.n_traces,
        windows_per_trace=adaptive.windows_per_trace,
        total_windows=adaptive.overhead.total_windows,
        sensor_scores=adaptive.sensor_scores,
        events=adaptive.events,
        overhead=adaptive.overhead,
        attack=AttackResult(
            byte_index=config.attack.byte_index,
            true_key_byte=config.key_bytes[config.attack.byte_index],
            step=config.attack.step,
            max_traces=config.attack.max_traces,
            regimes=results,
        ),
    )
    return RunOutcome(
        report=_finish(report, hooks, violations),
        exports=adaptive.exports,
        captures=captures,
        guesses=guesses,
    )


def sweep_grid(config: ExperimentConfig) -> List[Tuple[float, float]]:
    """(th_high, th_low) pairs, th_high in the outer loop."""
    return [(th_high, th_low) for th_high in config.sweep.th_high for th_low in config.sweep.th_low]


def frontier_point(config: ExperimentConfig, layout: Layout, th_high: float, th_low: float) -> Tuple[FrontierRow, int]:
    """Median adaptive-regime MTD and overhead at one threshold pair, plus hook violations."""
    mtds: List[Optional[int]] = []
    energies: List[float] = []
    activations: List[int] = []
    violations = 0
    for r in range(config.sweep.replicates):
        hooks = _validation_hooks("sweep", th_high)
        outcome = simulate_replicate(config, layout, "adaptive", r, th_low=th_low, th_high=th_high, hooks=hooks)
        violations += hooks.violations
        mtds.append(disclosure(config, outcome.capture))
        energies.append(outcome.overhead.extra_energy)
        activations.append(outcome.activations)
    row = FrontierRow(
        th_high=th_high,
        th_low=th_low,
        mtd=median_mtd(mtds),
        extra_energy=float(np.median(energies)),
        activations=float(np.median(activations)),
    )
    return row, violations


async def _sweep_worker(
    worker_id: int,
    point_queue: asyncio.Queue,
    config: ExperimentConfig,
    layout: Layout,
    results: Dict[int, Tuple[FrontierRow, int]],
    progress: Optional[Progress],
    overall_task,
) -> None:
    """
    Worker that takes grid points from the queue and simulates them in a thread.

    Args:
        worker_id: Unique worker identifier
        point_queue: Shared queue of (index, (th_high, th_low))
        config: experiment config
        layout: shared static layout
        results: index -> (row, violations), filled in place
        progress: Rich Progress instance for updates (optional)
        overall_task: Progress task ID for overall completion
    """
    while True:
        try:
            index, (th_high, th_low) = point_queue.get_nowait()
        except asyncio.QueueEmpty:
            break
        try:
            logger.debug(f"worker {worker_id}: th_high={th_high} th_low={th_low}")
            results[index] = await asyncio.to_thread(frontier_point, config, layout, th_high, th_low)
        finally:
            point_queue.task_done()
            if progress is not None:
                progress.update(overall_task, advance=1)


async def execute_sweep(
    config: ExperimentConfig,
    hooks: Optional[HookManager] = None,
    progress: Optional[Progress] = None,
) -> RunOutcome:
    """Evaluate the (th_high, th_low) grid and return the MTD / overhead frontier."""
    _require_mode(config, "sweep")
    layout = build_layout(config)
    grid = sweep_grid(config)

    point_queue: asyncio.Queue = asyncio.Queue()
    for item in enumerate(grid):
        point_queue.put_nowait(item)

    overall_task = None
    if progress is not None:
        overall_task = progress.add_task(f"[cyan]Sweeping {len(grid)} threshold pairs", total=len(grid))

    results: Dict[int, Tuple[FrontierRow, int]] = {}
    workers = [
        _sweep_worker(worker_id, point_queue, config, layout, results, progress, overall_task)
        for worker_id in range(min(config.sweep.workers, len(grid)))
    ]
    await asyncio.gather(*workers)

    frontier = [results[i][0] for i in range(len(grid))]
    violations = sum(results[i][1] for i in range(len(grid)))
    n_traces = config.attack.max_traces
    report = RunReport(
        mode="sweep",
        seed=config.seed,
        config=config,
        n_traces=n_traces,
        windows_per_trace=layout.n_windows,
        total_windows=n_traces * layout.n_windows,
        frontier=frontier,
    )
    return RunOutcome(report=_finish(report, hooks, violations))


def run_attack_sweep(config: ExperimentConfig, hooks: Optional[HookManager] = None) -> RunReport:
    """Attack mode: three regimes. Sweep mode: the threshold frontier."""
    if config.mode == "sweep":
        return asyncio.run(execute_sweep(config, hooks)).report
    return execute_attack(config, hooks).report


# ============================================================================
# PIPELINE
# ============================================================================

class SimulationPipeline:
    """Orchestrates one command: cache, run directory, hooks, simulation, artifacts."""

    def __init__(self, config: ExperimentConfig, base_output_dir: Path, show_progress: bool = True):
        """
        Initialize the pipeline.

        Args:
            config: validated experiment config (its mode selects what runs)
            base_output_dir: Base directory for all run directories and the run index
            show_progress: Render a progress bar for sweeps
        """
        self.config = config
        self.mode = config.mode
        self.base_output_dir = Path(base_output_dir)
        self.show_progress = show_progress
        self.digest = config_digest(config)
        self.run_id = make_run_id(self.mode, self.digest, config.seed)
        self.cache_manager = CacheManager(data_dir=self.base_output_dir)

        # Will be set during execution
        self.run_context: Optional[RunContext] = None

    async def _execute(self, hooks: HookManager) -> RunOutcome:
        if self.mode == "calibrate":
            return execute_calibration(self.config, hooks)
        if self.mode == "run":
            return execute_closed_loop(self.config, hooks)
        if self.mode == "attack":
            return execute_attack(self.config, hooks)
        if not self.show_progress:
            return await execute_sweep(self.config, hooks)
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TaskProgressColumn(),
            TimeElapsedColumn(),
            console=console,
        ) as progress:
            return await execute_sweep(self.config, hooks, progress)

    def write_artifacts(self, outcome: RunOutcome) -> None:
        ctx = self.run_context
        report = outcome.report
        write_report(ctx.report_file, report)
        ctx.write_config(self.config)
        if outcome.exports is not None:
            write_region_traces(ctx.csv_path("region_traces"), outcome.exports)
            write_readings(ctx.csv_path("readings"), outcome.exports, report.windows_per_trace)
            write_scores(ctx.csv_path("scores"), outcome.exports, self.config.detector.kind)
        if self.mode in ("run", "attack"):
            write_events(ctx.csv_path("events"), report.events)
        if self.mode == "sweep":
            write_frontier(ctx.csv_path("frontier"), report.frontier)
        for regime, result in outcome.guesses.items():
            write_guesses(ctx.csv_path(f"guesses_{regime}"), result)
        capture = outcome.captures.get("adaptive")
        if capture is not None and self.config.harness.export_limit > 0:
            ctx.write_attack_traces(capture, self.config.harness.export_limit)

    async def run(self, force: bool = False) -> Dict[str, Any]:
        """
        Run the command, or serve it from the cache.

        Args:
            force: If True, bypass cache and re-run

        Returns:
            Dict with run_id, status, cached flag, run_dir and the RunReport
        """
        seed = self.config.seed
        if not force:
            cached_run_id = self.cache_manager.get_cached_run(self.mode, self.digest, seed)
            if cached_run_id:
                run_dir = self.base_output_dir / cached_run_id
                logger.info(f"cache hit: {cached_run_id}")
                return {
                    "run_id": cached_run_id,
                    "status": "cached",
                    "cached": True,
                    "run_dir": str(run_dir),
                    "report": load_report(run_dir / "report.json"),
                }

        self.run_context = RunContext(self.run_id, self.base_output_dir, self.mode, seed, self.digest)
        self.run_context.create_directories()
        self.cache_manager.add_run(self.run_id, self.mode, self.digest, seed, status="in_progress")

        logging_manager = LoggingManager(self.run_context.run_dir)
        run_logger = RunLogger(
            log_file=logging_manager.get_log_path(self.mode, "run"),
            events_file=logging_manager.get_log_path(self.mode, "events"),
        )
        hooks = create_run_hooks(self.mode, run_logger, th_high=self.config.controller.th_high)
        run_logger.log_message(f"starting {self.mode} run {self.run_id} (seed {seed})")

        started = time.perf_counter()
        try:
            outcome = await self._execute(hooks)
        except Exception as e:
            run_logger.log_message(f"run failed: {e}", level="ERROR")
            self.run_context.mark_failed(str(e))
            self.cache_manager.update_run_status(self.run_id, "failed")
            raise
        wall_clock = time.perf_counter() - started

        self.write_artifacts(outcome)
        report = outcome.report.model_copy(update={"wall_clock_seconds": wall_clock})
        logging_manager.create_summary(
            self.mode, {**run_logger.get_stats(), "hook_violations": report.hook_violations}
        )
        self.run_context.mark_completed(wall_clock)
        self.cache_manager.update_run_status(self.run_id, "completed")
        return {
            "run_id": self.run_id,
            "status": "completed",
            "cached": False,
            "run_dir": str(self.run_context.run_dir),
            "report": report,
        }
