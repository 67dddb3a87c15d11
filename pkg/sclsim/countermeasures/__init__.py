"""Adaptive countermeasure cells and overhead accounting."""

from sclsim.countermeasures.cells import (
    CmApplication,
    CountermeasureBank,
    CountermeasureDraws,
    CountermeasureState,
    apply_cm,
    armed_summary,
    overhead_accumulate,
)

__all__ = [
    "CmApplication",
    "CountermeasureBank",
    "CountermeasureDraws",
    "CountermeasureState",
    "apply_cm",
    "armed_summary",
    "overhead_accumulate",
]
