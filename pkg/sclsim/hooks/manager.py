"""
Hook Manager for sclsim runs.

Combines validation hooks and logging hooks into one mapping of hook point
name to callables, and dispatches payloads to them.
"""

import logging
from typing import Any, Callable, Dict, List, Optional

from .logging import RunLogger, create_logging_hooks
from .validation import (
    ValidationTracker,
    create_energy_validation_hook,
    create_event_validation_hook,
    create_report_validation_hook,
)

logger = logging.getLogger(__name__)

HOOK_POINTS = ("on_trace", "on_transition", "on_epoch_reset", "on_run_complete")


class HookManager:
    """Manages all hooks for a run (validation + logging)."""

    def __init__(
        self,
        mode: str,
        run_logger: Optional[RunLogger] = None,
        th_high: Optional[float] = None,
        validate: bool = True,
    ):
        """
        Initialize the hook manager.

        Args:
            mode: Run mode (calibrate, run, attack, sweep)
            run_logger: Optional RunLogger for logging hooks
            th_high: Activation threshold the localization check compares against
            validate: Whether to install the invariant validation hooks
        """
        self.mode = mode
        self.run_logger = run_logger
        self.tracker = ValidationTracker(run_logger)
        self.hooks = self.create_hooks(th_high, validate)

    def create_hooks(self, th_high: Optional[float], validate: bool) -> Dict[str, List[Callable[..., None]]]:
        hooks: Dict[str, List[Callable[..., None]]] = {point: [] for point in HOOK_POINTS}

        if validate:
            if self.mode in ("run", "attack", "sweep") and th_high is not None:
                hooks["on_transition"].append(create_event_validation_hook(self.tracker, th_high))
                hooks["on_trace"].append(create_energy_validation_hook(self.tracker))
            hooks["on_run_complete"].append(create_report_validation_hook(self.tracker))

        if self.run_logger:
            for point, callables in create_logging_hooks(self.run_logger).items():
                hooks[point].extend(callables)

        return hooks

    def add(self, point: str, hook: Callable[..., None]) -> None:
        if point not in self.hooks:
            raise ValueError(f"Unknown hook point: {point}")
        self.hooks[point].append(hook)

    def has(self, point: str) -> bool:
        return bool(self.hooks.get(point))

    def fire(self, point: str, **payload: Any) -> None:
        """Call every hook registered at a point; hook failures are logged, never raised."""
        for hook in self.hooks.get(point, []):
            try:
                hook(**payload)
            except Exception as e:
                logger.error(f"hook {getattr(hook, '__name__', hook)} failed at {point}: {e}")

    @property
    def violations(self) -> int:
        return self.tracker.violations


def create_run_hooks(mode: str, run_logger: Optional[RunLogger] = None, th_high: Optional[float] = None) -> HookManager:
    """Convenience function to create the hook manager for a run."""
    return HookManager(mode, run_logger, th_high)
