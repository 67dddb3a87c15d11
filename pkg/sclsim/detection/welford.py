"""
Single-pass moment accumulators.

WelfordAccumulator is an immutable record updated by the pure
``welford_update`` recurrence. ClassedAccumulator keeps one accumulator per
observable byte value (256 classes) plus a global one, in numpy arrays.
"""

import math
from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from sclsim.exceptions import InsufficientSamples

N_CLASSES = 256


@dataclass(frozen=True, slots=True)
class WelfordAccumulator:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def __post_init__(self):
        if self.n < 0 or self.m2 < 0:
            raise ValueError(f"invalid accumulator state n={self.n}, m2={self.m2}")
        if self.n == 0 and (self.mean != 0.0 or self.m2 != 0.0):
            raise ValueError("empty accumulator must have zero mean and m2")

    @property
    def sample_variance(self) -> float:
        if self.n < 2:
            raise InsufficientSamples(f"sample variance needs n >= 2, have {self.n}")
        return self.m2 / (self.n - 1)

    @property
    def population_variance(self) -> float:
        if self.n < 1:
            raise InsufficientSamples("population variance needs at least one sample")
        return self.m2 / self.n


def welford_update(acc: WelfordAccumulator, x: float) -> WelfordAccumulator:
    """Fold one sample into the accumulator."""
    if not math.isfinite(x):
        raise ValueError(f"sample must be finite, got {x}")
    n = acc.n + 1
    delta = x - acc.mean
    mean = acc.mean + delta / n
    m2 = acc.m2 + delta * (x - mean)
    return WelfordAccumulator(n=n, mean=mean, m2=max(m2, 0.0))


def welford_merge(a: WelfordAccumulator, b: WelfordAccumulator) -> WelfordAccumulator:
    """Combine two accumulators over disjoint samples (parallel update)."""
    if a.n == 0:
        return b
    if b.n == 0:
        return a
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * b.n / n
    m2 = a.m2 + b.m2 + delta * delta * a.n * b.n / n
    return WelfordAccumulator(n=n, mean=mean, m2=m2)


def accumulate(samples: Iterable[float], acc: WelfordAccumulator = WelfordAccumulator()) -> WelfordAccumulator:
    for x in samples:
        acc = welford_update(acc, float(x))
    return acc


class ClassedAccumulator:
    """Per-class and global Welford moments of a labelled sample stream."""

    def __init__(self, n_classes: int = N_CLASSES):
        self.n_classes = n_classes
        self.counts = np.zeros(n_classes, dtype=np.int64)
        self.means = np.zeros(n_classes, dtype=np.float64)
        self.m2 = np.zeros(n_classes, dtype=np.float64)
        self.total = WelfordAccumulator()

    def update(self, x: float, label: int) -> None:
        if not 0 <= label < self.n_classes:
            raise ValueError(f"class label {label} outside [0, {self.n_classes})")
        cls = welford_update(self.class_accumulator(label), x)
        self.counts[label] = cls.n
        self.means[label] = cls.mean
        self.m2[label] = cls.m2
        self.total = welford_update(self.total, x)

    def class_accumulator(self, label: int) -> WelfordAccumulator:
        return WelfordAccumulator(n=int(self.counts[label]), mean=float(self.means[label]), m2=float(self.m2[label]))

    @property
    def classes(self) -> List[WelfordAccumulator]:
        return [self.class_accumulator(c) for c in range(self.n_classes)]

    @property
    def occupied_classes(self) -> int:
        return int(np.count_nonzero(self.counts))
