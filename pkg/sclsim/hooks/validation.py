"""
Validation hooks for sclsim runs.

Runtime invariant checks wired into the pipeline's hook points. A failed
check never aborts the run: it is logged at ERROR and counted, and the count
ends up in the run report.
"""

import logging
import math
from typing import Any, Callable, Dict, List, Optional

from sclsim.hooks.logging import RunLogger
from sclsim.schemas import RunReport
from sclsim.utils import validate_with_pydantic

logger = logging.getLogger(__name__)


class ValidationTracker:
    """Collects invariant violations seen during a run."""

    def __init__(self, run_logger: Optional[RunLogger] = None, max_messages: int = 100):
        self.run_logger = run_logger
        self.max_messages = max_messages
        self.violations = 0
        self.messages: List[str] = []

    def violation(self, message: str) -> None:
        self.violations += 1
        if len(self.messages) < self.max_messages:
            self.messages.append(message)
        logger.error(f"invariant violated: {message}")
        if self.run_logger is not None:
            self.run_logger.log_message(f"invariant violated: {message}", level="ERROR")


def create_event_validation_hook(tracker: ValidationTracker, th_high: float) -> Callable[..., None]:
    """
    Check every controller transition as it happens.

    Soundness: per ACC, activations minus deactivations stays in {0, 1}.
    Localization: an activation names a sensor whose score met th_high.
    Scores are finite and non-negative.
    """
    balance: Dict[int, int] = {}

    def on_transition(events, window_idx: int, **_: Any) -> None:
        try:
            for event in events:
                if not math.isfinite(event.score) or event.score < 0:
                    tracker.violation(f"window {window_idx}: ACC {event.acc_id} transition on score {event.score}")
                count = balance.get(event.acc_id, 0) + (1 if event.transition == "activated" else -1)
                if count not in (0, 1):
                    tracker.violation(f"window {window_idx}: ACC {event.acc_id} event balance {count}")
                balance[event.acc_id] = min(max(count, 0), 1)
                if event.transition == "activated" and event.score < th_high:
                    tracker.violation(
                        f"window {window_idx}: sensor {event.sensor_id} activated ACC {event.acc_id} "
                        f"with score {event.score} below th_high {th_high}"
                    )
        except Exception as e:
            logger.error(f"Error in event validation hook: {e}")

    return on_transition


def create_energy_validation_hook(tracker: ValidationTracker) -> Callable[..., None]:
    """ACCs that were off during a segment must not have spent energy."""

    def on_trace(trace_idx: int, acc_energy, acc_on, **_: Any) -> None:
        try:
            for acc_id, (energy, on) in enumerate(zip(acc_energy, acc_on)):
                if energy < 0 or (not on and energy != 0):
                    tracker.violation(f"trace {trace_idx}: ACC {acc_id} (on={bool(on)}) spent energy {energy}")
        except Exception as e:
            logger.error(f"Error in energy validation hook: {e}")

    return on_trace


def create_report_validation_hook(tracker: ValidationTracker) -> Callable[..., None]:
    """Validate the final report against its schema and its own totals."""

    def on_run_complete(report: RunReport, **_: Any) -> None:
        try:
            is_valid, errors = validate_with_pydantic(report.model_dump(mode="json"), RunReport)
            for error in errors if not is_valid else []:
                tracker.violation(f"report schema: {error}")
            overhead = report.overhead
            if any(w > report.total_windows for w in overhead.windows_active):
                tracker.violation("an ACC was active in more windows than were simulated")
            if overhead.extra_energy < 0:
                tracker.violation(f"negative extra energy {overhead.extra_energy}")
        except Exception as e:
            logger.error(f"Error in report validation hook: {e}")

    return on_run_complete
