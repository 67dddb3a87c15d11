"""
Leakage statistics over accumulators: Welch's t and NICV, plus the unified
score handed to the controller.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from sclsim.detection.welford import ClassedAccumulator, WelfordAccumulator
from sclsim.exceptions import DegenerateVariance, InsufficientSamples, SimulationError


@dataclass(frozen=True, slots=True)
class DetectorKind:
    """tvla_fixed_random, or nicv conditioned on one plaintext byte."""
    name: str
    byte_index: int = 0

    def __post_init__(self):
        if self.name not in ("tvla_fixed_random", "nicv"):
            raise ValueError(f"unknown detector '{self.name}'")
        if not 0 <= self.byte_index < 16:
            raise ValueError(f"byte_index must be < 16, got {self.byte_index}")

    @classmethod
    def tvla(cls) -> "DetectorKind":
        return cls("tvla_fixed_random")

    @classmethod
    def nicv(cls, byte_index: int = 0) -> "DetectorKind":
        return cls("nicv", byte_index)


@dataclass(frozen=True, slots=True)
class LeakageScore:
    sensor_id: int
    window_idx: int
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"leakage score must be finite and non-negative, got {self.value}")


def welch_t(a: WelfordAccumulator, b: WelfordAccumulator) -> float:
    """
    Welch's t-statistic between two populations using sample variances.

    Raises:
        InsufficientSamples: either side has fewer than two samples
        DegenerateVariance: both variances are zero but the means differ
    """
    if a.n < 2 or b.n < 2:
        raise InsufficientSamples(f"welch_t needs two samples per class, have {a.n} and {b.n}")
    denom2 = a.sample_variance / a.n + b.sample_variance / b.n
    if denom2 == 0.0:
        if a.mean == b.mean:
            return 0.0
        raise DegenerateVariance("both classes have zero variance but different means")
    return (a.mean - b.mean) / math.sqrt(denom2)


def nicv(classed: ClassedAccumulator) -> float:
    """
    Normalized inter-class variance Var(E[P|X]) / Var(P), population variances.

    Raises:
        InsufficientSamples: fewer than two samples or fewer than two occupied classes
        DegenerateVariance: the global population variance is zero
    """
    total = classed.total
    if total.n < 2:
        raise InsufficientSamples(f"nicv needs at least two samples, have {total.n}")
    if classed.occupied_classes < 2:
        raise InsufficientSamples("nicv needs at least two occupied classes")
    if total.m2 == 0.0:
        raise DegenerateVariance("global variance is zero")
    between = float(np.sum(classed.counts * (classed.means - total.mean) ** 2)) / total.n
    return min(max(between / total.population_variance, 0.0), 1.0)


DetectorState = Union[ClassedAccumulator, Tuple[WelfordAccumulator, WelfordAccumulator]]


def score(
    detector: DetectorKind,
    state: DetectorState,
    window_idx: int,
    *,
    sensor_id: int = 0,
    score_scale: float = 10.0,
) -> LeakageScore:
    """
    Turn a detector state into a controller score.

    Args:
        detector: which statistic the state feeds
        state: (fixed, random) accumulators for TVLA, a ClassedAccumulator for NICV
        window_idx: window at which the score is evaluated
        sensor_id: sensor the state belongs to
        score_scale: NICV multiplier onto the threshold scale

    Returns:
        LeakageScore with |t| or nicv * score_scale
    """
    if detector.name == "tvla_fixed_random":
        fixed, random = state
        value = abs(welch_t(fixed, random))
    else:
        value = nicv(state) * score_scale
    return LeakageScore(sensor_id=sensor_id, window_idx=window_idx, value=value)


def try_score(detector: DetectorKind, state: DetectorState, window_idx: int, **kwargs) -> Optional[LeakageScore]:
    """Like score(), but a detector precondition failure means no score this window."""
    try:
        return score(detector, state, window_idx, **kwargs)
    except SimulationError:
        return None
