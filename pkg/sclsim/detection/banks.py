"""
Vectorized detector banks: one detector per (sensor, window position).

A sensor's score at any moment is the maximum over the window positions of
the current epoch that are scoreable. Undefined statistics are NaN and are
skipped by the fmax reductions, which is how "no score this window" is
represented inside the closed loop.
"""

import logging
from dataclasses import dataclass

import numpy as np

from sclsim.detection.welford import N_CLASSES

logger = logging.getLogger(__name__)


def fmax_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise NaN-skipping max; rows with no finite entry (or no columns) give NaN."""
    if a.shape[-1] == 0:
        return np.full(a.shape[:-1], np.nan)
    return np.fmax.reduce(a, axis=-1)


def argmax_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise NaN-skipping argmax; -1 where a row has no finite entry."""
    filled = np.where(np.isnan(a), -np.inf, a)
    idx = np.argmax(filled, axis=-1) if a.shape[-1] else np.zeros(a.shape[:-1], dtype=np.intp)
    return np.where(np.all(np.isnan(a), axis=-1), -1, idx)


class WelfordBank:
    """Welford moments for an array of cells that are always updated together."""

    def __init__(self, shape):
        self.shape = tuple(shape)
        self.reset()

    def reset(self) -> None:
        self.n = 0
        self.mean = np.zeros(self.shape)
        self.m2 = np.zeros(self.shape)

    def update(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def sample_variance(self) -> np.ndarray:
        if self.n < 2:
            return np.full(self.shape, np.nan)
        return self.m2 / (self.n - 1)


class TvlaBank:
    """Fixed-vs-random Welch t-test per (sensor, window position)."""

    def __init__(self, n_sensors: int, n_positions: int):
        self.fixed = WelfordBank((n_sensors, n_positions))
        self.random = WelfordBank((n_sensors, n_positions))

    def update(self, counts: np.ndarray, fixed: bool) -> None:
        """Add one trace of counts shaped (n_sensors, n_positions)."""
        (self.fixed if fixed else self.random).update(np.asarray(counts, dtype=np.float64))

    def reset(self) -> None:
        self.fixed.reset()
        self.random.reset()

    def t_statistics(self) -> np.ndarray:
        a, b = self.fixed, self.random
        if a.n < 2 or b.n < 2:
            return np.full(a.shape, np.nan)
        denom2 = a.sample_variance() / a.n + b.sample_variance() / b.n
        diff = a.mean - b.mean
        with np.errstate(divide="ignore", invalid="ignore"):
            t = diff / np.sqrt(denom2)
        degenerate = denom2 == 0.0
        return np.where(degenerate, np.where(diff == 0.0, 0.0, np.nan), t)

    def max_abs_t(self) -> np.ndarray:
        return fmax_rows(np.abs(self.t_statistics()))

    def peak_positions(self) -> np.ndarray:
        return argmax_rows(np.abs(self.t_statistics()))


@dataclass
class NicvCandidate:
    """Bank state for positions [start, start + length) after adding one more trace."""
    start: int
    label: int
    n: np.ndarray
    ref: np.ndarray
    mean: np.ndarray
    m2: np.ndarray
    class_n: np.ndarray
    class_sum: np.ndarray
    q: np.ndarray
    occupied: np.ndarray
    values: np.ndarray

    @property
    def length(self) -> int:
        return self.values.shape[1]


class NicvBank:
    """
    NICV per (sensor, window position), conditioned on one plaintext byte.

    Samples are centered on the first sample each position received in the
    epoch. Per class only the count and sum are kept; the between-class sum
    of squares follows from Q = sum_c S_c^2 / n_c, updated incrementally.
    """

    def __init__(self, n_sensors: int, n_positions: int, *, min_samples: int = 2, score_scale: float = 10.0,
                 n_classes: int = N_CLASSES):
        self.n_sensors = n_sensors
        self.n_positions = n_positions
        self.min_samples = max(int(min_samples), 2)
        self.score_scale = score_scale
        self.n_classes = n_classes
        self.n = np.zeros(n_positions, dtype=np.int64)
        self.occupied = np.zeros(n_positions, dtype=np.int64)
        self.ref = np.zeros((n_sensors, n_positions))
        self.mean = np.zeros((n_sensors, n_positions))
        self.m2 = np.zeros((n_sensors, n_positions))
        self.q = np.zeros((n_sensors, n_positions))
        self.class_n = np.zeros((n_positions, n_classes), dtype=np.int64)
        self.class_sum = np.zeros((n_sensors, n_positions, n_classes))
        self.values = np.full((n_sensors, n_positions), np.nan)

    def reset(self) -> None:
        for arr in (self.n, self.occupied, self.ref, self.mean, self.m2, self.q, self.class_n, self.class_sum):
            arr.fill(0)
        self.values.fill(np.nan)

    def candidate(self, x: np.ndarray, label: int, start: int = 0) -> NicvCandidate:
        """
        Compute the state that adding one trace's counts would produce.

        Args:
            x: (n_sensors, L) counts for window positions start .. start + L - 1
            label: class of the trace (plaintext byte value)
            start: first window position covered by x

        Returns:
            NicvCandidate holding the updated state of the covered positions
        """
        x = np.asarray(x, dtype=np.float64)
        sl = slice(start, start + x.shape[1])
        n_old = self.n[sl]
        ref = np.where(n_old == 0, x, self.ref[:, sl])
        xc = x - ref
        n_new = n_old + 1
        mean_old = self.mean[:, sl]
        delta = xc - mean_old
        mean = mean_old + delta / n_new
        m2 = self.m2[:, sl] + delta * (xc - mean)

        cn_old = self.class_n[sl, label]
        cs_old = self.class_sum[:, sl, label]
        cs_new = cs_old + xc
        prior = np.where(cn_old > 0, cs_old * cs_old / np.maximum(cn_old, 1), 0.0)
        q = self.q[:, sl] - prior + cs_new * cs_new / (cn_old + 1)
        occupied = self.occupied[sl] + (cn_old == 0)

        ssb = q - n_new * mean * mean
        valid = (n_new >= self.min_samples) & (occupied >= 2) & (m2 > 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.where(valid, np.clip(ssb / m2, 0.0, 1.0), np.nan)
        return NicvCandidate(
            start=start,
            label=label,
            n=n_new,
            ref=ref,
            mean=mean,
            m2=m2,
            class_n=cn_old + 1,
            class_sum=cs_new,
            q=q,
            occupied=occupied,
            values=values,
        )

    def commit(self, c: NicvCandidate) -> None:
        sl = slice(c.start, c.start + c.length)
        self.n[sl] = c.n
        self.occupied[sl] = c.occupied
        self.ref[:, sl] = c.ref
        self.mean[:, sl] = c.mean
        self.m2[:, sl] = c.m2
        self.q[:, sl] = c.q
        self.class_n[sl, c.label] = c.class_n
        self.class_sum[:, sl, c.label] = c.class_sum
        self.values[:, sl] = c.values

    def update(self, x: np.ndarray, label: int, start: int = 0) -> None:
        self.commit(self.candidate(x, label, start))

    def running_scores(self, c: NicvCandidate) -> np.ndarray:
        """
        Per-sensor score after each window of the candidate segment.

        The score after window j is the max over positions already updated
        this trace (candidate values up to j) and positions still holding
        the previous trace's values.

        Returns:
            (n_sensors, L) scaled scores, NaN where nothing is scoreable
        """
        old = self.values
        end = c.start + c.length
        outside = np.fmax(fmax_rows(old[:, :c.start]), fmax_rows(old[:, end:]))
        seg_old = old[:, c.start:end]
        later = np.full_like(seg_old, np.nan)
        if c.length > 1:
            later[:, :-1] = np.fmax.accumulate(seg_old[:, ::-1], axis=1)[:, ::-1][:, 1:]
        updated = np.fmax.accumulate(c.values, axis=1)
        return np.fmax(np.fmax(updated, later), outside[:, None]) * self.score_scale

    def running_peak(self, c: NicvCandidate, sensor_id: int, column: int) -> int:
        """Window position holding a sensor's running score after candidate column `column` (-1 if none)."""
        split = c.start + column + 1
        row = np.concatenate([
            self.values[sensor_id, :c.start],
            c.values[sensor_id, :column + 1],
            self.values[sensor_id, split:],
        ])
        if np.all(np.isnan(row)):
            return -1
        return int(np.nanargmax(row))

    def scores(self) -> np.ndarray:
        """Current per-sensor scaled score (NaN if no position is scoreable)."""
        return fmax_rows(self.values) * self.score_scale

    def peak_positions(self) -> np.ndarray:
        return argmax_rows(self.values)
