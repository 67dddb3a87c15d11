"""
Logging Manager for sclsim runs.

Handles logging directory setup and organization.
"""

import json
from datetime import datetime
from pathlib import Path


class LoggingManager:
    """Manages logging directories and files for simulation runs."""

    def __init__(self, run_dir: Path):
        """
        Initialize the logging manager.

        Args:
            run_dir: Root directory for the run (contains csv/, logs/, report.json)
        """
        self.run_dir = Path(run_dir)
        self.logs_dir = self.run_dir / "logs"
        self.logs_dir.mkdir(parents=True, exist_ok=True)

    def get_mode_log_dir(self, mode: str) -> Path:
        mode_dir = self.logs_dir / mode
        mode_dir.mkdir(parents=True, exist_ok=True)
        return mode_dir

    def get_log_path(self, mode: str, log_type: str = "run") -> Path:
        """
        Get the log file path for a mode.

        Args:
            mode: Run mode (calibrate, run, attack, sweep)
            log_type: "run" for the text log, "events" for the JSONL event stream

        Returns:
            Path to the log file
        """
        mode_dir = self.get_mode_log_dir(mode)
        if log_type == "run":
            return mode_dir / "run.log"
        elif log_type == "events":
            return mode_dir / "events.jsonl"
        raise ValueError(f"Unknown log_type: {log_type}")

    def get_summary_path(self, mode: str) -> Path:
        return self.get_mode_log_dir(mode) / "summary.json"

    def create_summary(self, mode: str, stats: dict) -> None:
        """
        Write the logging summary for a mode.

        Args:
            mode: Run mode
            stats: Counters (messages, events, hook violations)
        """
        summary = {
            "mode": mode,
            "timestamp": datetime.now().isoformat(),
            "run_dir": str(self.run_dir),
            "stats": stats,
        }
        with open(self.get_summary_path(mode), 'w') as f:
            json.dump(summary, f, indent=2)
