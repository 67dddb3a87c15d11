"""Run directories and the CSV / JSON artifacts written into them."""

import csv
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence

from sclsim.attack.cpa import AttackTraceSet, guess_correlation_rows
from sclsim.attack.io import export_traces
from sclsim.floorplan.sensors import readings_from_counts
from sclsim.pipeline.simulation import TraceExports
from sclsim.schemas import ControllerEvent, ExperimentConfig, FrontierRow, KeyRankResult, RunReport
from sclsim.utils import flatten_model

logger = logging.getLogger(__name__)

REGION_TRACE_COLUMNS = ["trace_id", "time_idx", "region_id", "power"]
READING_COLUMNS = ["trace_id", "window_idx", "sensor_id", "count"]
SCORE_COLUMNS = ["sensor_id", "window_idx", "detector", "score"]
EVENT_COLUMNS = ["window_idx", "sensor_id", "acc_id", "transition", "score"]
FRONTIER_COLUMNS = ["th_high", "th_low", "mtd", "extra_energy", "activations"]
GUESS_COLUMNS = ["key_guess", "max_abs_corr"]


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_region_traces(path: Path, exports: TraceExports) -> Path:
    def rows():
        for trace_id, power in exports.region_power:
            for t in range(power.shape[0]):
                for r in range(power.shape[1]):
                    yield trace_id, t, r, _fmt(power[t, r])
    return _write_csv(path, REGION_TRACE_COLUMNS, rows())


def write_readings(path: Path, exports: TraceExports, windows_per_trace: int) -> Path:
    rows = []
    saturated_rows = 0
    for trace_id, counts, saturated in exports.readings:
        for r in readings_from_counts(counts, saturated, first_window=trace_id * windows_per_trace):
            rows.append((trace_id, r.window_idx, r.sensor_id, r.count))
            saturated_rows += r.saturated
    if saturated_rows:
        logger.warning(f"{saturated_rows} of {len(rows)} exported sensor readings saturated (gamma * power >= 1)")
    return _write_csv(path, READING_COLUMNS, rows)


def write_scores(path: Path, exports: TraceExports, detector: str) -> Path:
    rows = ((s, w, detector, _fmt(v)) for s, w, v in exports.scores)
    return _write_csv(path, SCORE_COLUMNS, rows)


def write_events(path: Path, events: Sequence[ControllerEvent]) -> Path:
    rows = ((e.window_idx, e.sensor_id, e.acc_id, e.transition, _fmt(e.score)) for e in events)
    return _write_csv(path, EVENT_COLUMNS, rows)


def write_frontier(path: Path, frontier: Sequence[FrontierRow]) -> Path:
    rows = (
        (_fmt(f.th_high), _fmt(f.th_low), "" if f.mtd is None else f.mtd, _fmt(f.extra_energy), _fmt(f.activations))
        for f in frontier
    )
    return _write_csv(path, FRONTIER_COLUMNS, rows)


def write_guesses(path: Path, result: KeyRankResult) -> Path:
    return _write_csv(path, GUESS_COLUMNS, ((k, _fmt(c)) for k, c in guess_correlation_rows(result)))


def write_report(path: Path, report: RunReport) -> Path:
    """report.json with stable field order; wall-clock is not part of it."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2) + "\n")
    return path


def load_report(path: Path) -> RunReport:
    return RunReport.model_validate_json(Path(path).read_text())


class RunContext:
    """Context for one run directory: report, metadata, CSV files and logs."""

    def __init__(self, run_id: str, base_data_dir: Path, mode: str, seed: int, config_digest: str):
        self.run_id = run_id
        self.base_data_dir = Path(base_data_dir)
        self.mode = mode
        self.seed = seed
        self.config_digest = config_digest

        # Directory structure
        self.run_dir = self.base_data_dir / run_id
        self.csv_dir = self.run_dir / "csv"
        self.logs_dir = self.run_dir / "logs"
        self.report_file = self.run_dir / "report.json"

        # Metadata
        self.created_at = datetime.now().isoformat()
        self.completed_at: Optional[str] = None
        self.status = "initializing"
        self.wall_clock_seconds: Optional[float] = None
        self.artifacts: List[str] = []

    def create_directories(self) -> None:
        """Create necessary directories for the run."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.csv_dir.mkdir(exist_ok=True)
        self.logs_dir.mkdir(exist_ok=True)
        self.save_metadata()

    def save_metadata(self) -> None:
        metadata = {
            "run_id": self.run_id,
            "mode": self.mode,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "created_at": self.created_at,
            "completed_at": self.completed_at,
            "status": self.status,
            "wall_clock_seconds": self.wall_clock_seconds,
            "artifacts": self.artifacts,
        }
        with open(self.run_dir / "metadata.json", 'w') as f:
            json.dump(metadata, f, indent=2)

    def csv_path(self, name: str) -> Path:
        path = self.csv_dir / f"{name}.csv"
        self.artifacts.append(str(path.relative_to(self.run_dir)))
        return path

    def mark_completed(self, wall_clock_seconds: float) -> None:
        self.status = "completed"
        self.completed_at = datetime.now().isoformat()
        self.wall_clock_seconds = wall_clock_seconds
        self.save_metadata()

    def mark_failed(self, error: str) -> None:
        self.status = f"failed: {error}"
        self.completed_at = datetime.now().isoformat()
        self.save_metadata()

    @classmethod
    def load(cls, run_dir: Path) -> "RunContext":
        """Load an existing run context from its directory."""
        run_dir = Path(run_dir)
        metadata_file = run_dir / "metadata.json"
        if not metadata_file.exists():
            raise FileNotFoundError(f"Run context not found: {run_dir}")
        with open(metadata_file) as f:
            metadata = json.load(f)
        context = cls(
            run_id=metadata["run_id"],
            base_data_dir=run_dir.parent,
            mode=metadata["mode"],
            seed=metadata["seed"],
            config_digest=metadata["config_digest"],
        )
        context.created_at = metadata["created_at"]
        context.completed_at = metadata.get("completed_at")
        context.status = metadata.get("status", "unknown")
        context.wall_clock_seconds = metadata.get("wall_clock_seconds")
        context.artifacts = metadata.get("artifacts", [])
        return context

    def load_report(self) -> RunReport:
        return load_report(self.report_file)

    def write_config(self, config: ExperimentConfig) -> Path:
        """Write the resolved config as section.key = value lines that load_config reads back."""
        path = self.run_dir / "config.conf"
        lines = [f"# resolved config of {self.run_id}"]
        for key, value in flatten_model(config).items():
            if value is None:
                continue
            if isinstance(value, (list, tuple)):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        path.write_text("\n".join(lines) + "\n")
        self.artifacts.append(path.name)
        return path

    def write_attack_traces(self, traces: AttackTraceSet, limit: int) -> Path:
        path = self.csv_path("attack_traces")
        return export_traces(traces.rows(0, min(limit, traces.n_traces)), path)
