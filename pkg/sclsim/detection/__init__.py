"""Streaming leakage detection: Welford moments, Welch's t, NICV and per-sensor banks."""

from sclsim.detection.banks import NicvBank, NicvCandidate, TvlaBank, WelfordBank, argmax_rows, fmax_rows
from sclsim.detection.statistics import DetectorKind, LeakageScore, nicv, score, try_score, welch_t
from sclsim.detection.welford import (
    N_CLASSES,
    ClassedAccumulator,
    WelfordAccumulator,
    accumulate,
    welford_merge,
    welford_update,
)

__all__ = [
    "N_CLASSES",
    "ClassedAccumulator",
    "DetectorKind",
    "LeakageScore",
    "NicvBank",
    "NicvCandidate",
    "TvlaBank",
    "WelfordAccumulator",
    "WelfordBank",
    "accumulate",
    "argmax_rows",
    "fmax_rows",
    "nicv",
    "score",
    "try_score",
    "welch_t",
    "welford_merge",
    "welford_update",
]
