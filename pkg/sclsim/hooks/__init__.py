"""
Hooks for sclsim runs.

Provides invariant validation hooks and logging hooks for capturing
controller activity during a simulation.
"""

from .logging import RunLogEntry, RunLogger, create_logging_hooks
from .logging_manager import LoggingManager
from .manager import HOOK_POINTS, HookManager, create_run_hooks
from .validation import (
    ValidationTracker,
    create_energy_validation_hook,
    create_event_validation_hook,
    create_report_validation_hook,
)

__all__ = [
    "HOOK_POINTS",
    "HookManager",
    "LoggingManager",
    "RunLogEntry",
    "RunLogger",
    "ValidationTracker",
    "create_energy_validation_hook",
    "create_event_validation_hook",
    "create_logging_hooks",
    "create_report_validation_hook",
    "create_run_hooks",
]
