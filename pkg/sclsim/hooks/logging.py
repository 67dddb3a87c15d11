"""
Logging hooks for sclsim runs.

Provides hooks that record controller transitions, epoch resets and run
completion. Human-readable lines go to run.log; one JSON object per event
goes to events.jsonl.
"""

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional


@dataclass
class RunLogEntry:
    """Log entry for one simulation event."""
    timestamp: str
    event_type: str  # "transition", "epoch_reset" or "run_complete"
    window_idx: Optional[int] = None
    payload: Dict[str, Any] = field(default_factory=dict)


class RunLogger:
    """Logger for a simulation run: message log plus JSONL event stream."""

    def __init__(self, log_file: Path, events_file: Path):
        """
        Initialize the run logger.

        Args:
            log_file: Path to the text log file
            events_file: Path to the events JSONL file
        """
        self.log_file = Path(log_file)
        self.events_file = Path(events_file)

        self.log_file.parent.mkdir(parents=True, exist_ok=True)
        self.events_file.parent.mkdir(parents=True, exist_ok=True)
        self.log_file.touch(exist_ok=True)
        self.events_file.touch(exist_ok=True)

        self.stats = {
            "messages_logged": 0,
            "events_logged": 0,
            "transitions": 0,
            "epoch_resets": 0,
            "errors": 0,
        }

    def log_message(self, message: str, level: str = "INFO"):
        timestamp = datetime.now().isoformat()
        with open(self.log_file, 'a') as f:
            f.write(f"[{timestamp}] [{level}] {message}\n")
        self.stats["messages_logged"] += 1
        if level == "ERROR":
            self.stats["errors"] += 1

    def log_event(self, entry: RunLogEntry):
        with open(self.events_file, 'a') as f:
            f.write(json.dumps(asdict(entry)) + '\n')
        self.stats["events_logged"] += 1

    def get_stats(self) -> Dict[str, int]:
        return self.stats.copy()


def create_logging_hooks(logger: RunLogger) -> Dict[str, List[Callable[..., None]]]:
    """
    Create the logging hooks for a run.

    Args:
        logger: RunLogger instance to write to

    Returns:
        Dictionary mapping hook point names to hook callables
    """

    def on_transition(events, window_idx: int, **_: Any) -> None:
        for event in events:
            logger.log_message(
                f"ACC {event.acc_id} {event.transition} by sensor {event.sensor_id} "
                f"(score={event.score:.4f}) at window {event.window_idx}"
            )
            logger.log_event(RunLogEntry(
                timestamp=datetime.now().isoformat(),
                event_type="transition",
                window_idx=window_idx,
                payload=event.model_dump(),
            ))
            logger.stats["transitions"] += 1

    def on_epoch_reset(window_idx: int, epoch: int, **_: Any) -> None:
        logger.log_message(f"detector epoch {epoch} starts after window {window_idx}", level="DEBUG")
        logger.log_event(RunLogEntry(
            timestamp=datetime.now().isoformat(),
            event_type="epoch_reset",
            window_idx=window_idx,
            payload={"epoch": epoch},
        ))
        logger.stats["epoch_resets"] += 1

    def on_run_complete(report, **_: Any) -> None:
        logger.log_message(
            f"{report.mode} run complete: {report.n_traces} traces, {len(report.events)} events, "
            f"extra_energy={report.overhead.extra_energy:.3f}"
        )
        logger.log_event(RunLogEntry(
            timestamp=datetime.now().isoformat(),
            event_type="run_complete",
            window_idx=report.total_windows,
            payload={"mode": report.mode, "seed": report.seed, "events": len(report.events)},
        ))

    return {
        "on_transition": [on_transition],
        "on_epoch_reset": [on_epoch_reset],
        "on_run_complete": [on_run_complete],
    }
