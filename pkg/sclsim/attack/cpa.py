"""
Correlation power analysis against the attacker-observable total power.

The model for key guess k is HW(Sbox(pt[byte] ^ k)); a guess scores the
maximum |Pearson correlation| over all time columns. CpaAccumulator keeps
running sums so that measurements-to-disclosure can evaluate checkpoint after
checkpoint without starting over.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from sclsim.dut.aes import SBOX
from sclsim.dut.leakage import HW_TABLE
from sclsim.exceptions import AllColumnsDegenerate, DegenerateVariance, InsufficientSamples, LengthMismatch
from sclsim.schemas import KeyRankResult

logger = logging.getLogger(__name__)

GUESSES = np.arange(256, dtype=np.uint8)
DEGENERATE_TOLERANCE = 1e-12


@dataclass
class AttackTraceSet:
    """Plaintexts and observable power of the traces an attacker captured."""
    plaintexts: np.ndarray
    observable: np.ndarray

    def __post_init__(self):
        self.plaintexts = np.asarray(self.plaintexts, dtype=np.uint8)
        self.observable = np.asarray(self.observable, dtype=np.float64)
        if self.plaintexts.ndim != 2 or self.plaintexts.shape[1] != 16:
            raise ValueError(f"plaintexts must have shape (n, 16), got {self.plaintexts.shape}")
        if self.observable.ndim != 2 or self.observable.shape[0] != self.plaintexts.shape[0]:
            raise ValueError(
                f"observable shape {self.observable.shape} does not match {self.plaintexts.shape[0]} plaintexts"
            )

    @property
    def n_traces(self) -> int:
        return self.plaintexts.shape[0]

    @property
    def n_samples(self) -> int:
        return self.observable.shape[1]

    def rows(self, start: int, stop: int) -> "AttackTraceSet":
        return AttackTraceSet(self.plaintexts[start:stop], self.observable[start:stop])


TraceSource = Union[AttackTraceSet, Callable[[int, int], AttackTraceSet]]


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Pearson product-moment correlation.

    Raises:
        LengthMismatch: the vectors differ in length
        InsufficientSamples: fewer than two samples
        DegenerateVariance: either vector is constant
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"pearson needs equal lengths, got {x.size} and {y.size}")
    if x.size < 2:
        raise InsufficientSamples("pearson needs at least two samples", module="attack")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(np.dot(xc, xc))
    syy = float(np.dot(yc, yc))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVariance("pearson input has zero variance", module="attack")
    return float(np.clip(np.dot(xc, yc) / np.sqrt(sxx * syy), -1.0, 1.0))


def hypothesis_matrix(plaintexts: np.ndarray, byte_index: int) -> np.ndarray:
    """(n, 256) HW(Sbox(pt[byte] ^ k)) for every key guess k."""
    column = np.asarray(plaintexts, dtype=np.uint8)[:, byte_index]
    return HW_TABLE[SBOX[np.bitwise_xor(column[:, None], GUESSES[None, :])]].astype(np.float64)


class CpaAccumulator:
    """Running sums for correlating 256 hypotheses with every time column."""

    def __init__(self, byte_index: int, n_samples: int):
        if not 0 <= byte_index < 16:
            raise ValueError(f"byte_index must be < 16, got {byte_index}")
        self.byte_index = byte_index
        self.n_samples = n_samples
        self.n = 0
        self.ref: Optional[np.ndarray] = None
        self.sum_x = np.zeros(n_samples)
        self.sum_x2 = np.zeros(n_samples)
        self.sum_m = np.zeros(256)
        self.sum_m2 = np.zeros(256)
        self.sum_mx = np.zeros((256, n_samples))

    def update(self, plaintexts: np.ndarray, observable: np.ndarray) -> None:
        observable = np.asarray(observable, dtype=np.float64)
        if observable.shape[0] != len(plaintexts):
            raise LengthMismatch(f"{len(plaintexts)} plaintexts but {observable.shape[0]} traces")
        if observable.shape[0] == 0:
            return
        if observable.shape[1] != self.n_samples:
            raise LengthMismatch(f"expected {self.n_samples} samples per trace, got {observable.shape[1]}")
        if self.ref is None:
            self.ref = observable[0].copy()
        x = observable - self.ref
        m = hypothesis_matrix(plaintexts, self.byte_index)
        self.n += x.shape[0]
        self.sum_x += x.sum(axis=0)
        self.sum_x2 += np.einsum("ij,ij->j", x, x)
        self.sum_m += m.sum(axis=0)
        self.sum_m2 += np.einsum("ij,ij->j", m, m)
        self.sum_mx += m.T @ x

    def correlations(self) -> np.ndarray:
        """
        Correlation of every hypothesis with every column.

        Returns:
            (256, n_samples) array; degenerate columns are NaN, constant
            hypotheses correlate 0
        """
        if self.n < 2:
            raise InsufficientSamples(f"CPA needs at least two traces, have {self.n}", module="attack")
        n = self.n
        mean_x = self.sum_x / n
        var_x = np.maximum(self.sum_x2 / n - mean_x ** 2, 0.0)
        mean_m = self.sum_m / n
        var_m = np.maximum(self.sum_m2 / n - mean_m ** 2, 0.0)
        cov = self.sum_mx / n - np.outer(mean_m, mean_x)
        degenerate = var_x <= DEGENERATE_TOLERANCE * (1.0 + (mean_x + self.ref) ** 2)
        flat_model = var_m <= DEGENERATE_TOLERANCE
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = cov / np.sqrt(np.outer(var_m, var_x))
        corr = np.clip(corr, -1.0, 1.0)
        corr[flat_model, :] = 0.0
        corr[:, degenerate] = np.nan
        return corr

    def guess_scores(self) -> np.ndarray:
        """Max |correlation| per key guess over the non-degenerate columns."""
        corr = self.correlations()
        if np.all(np.isnan(corr[0])):
            raise AllColumnsDegenerate("every time column of the attack traces is constant")
        return np.fmax.reduce(np.abs(corr), axis=1)

    def rank(self, true_key_byte: int) -> KeyRankResult:
        scores = self.guess_scores()
        order = np.lexsort((np.arange(256), -scores))
        ranked = [int(k) for k in order]
        return KeyRankResult(
            byte_index=self.byte_index,
            ranked_guesses=ranked,
            rank_of_true_key=ranked.index(int(true_key_byte)),
            scores=[float(s) for s in scores],
        )


def cpa_rank(traces: AttackTraceSet, byte_index: int, true_key_byte: int) -> KeyRankResult:
    """One-shot CPA on a whole trace set."""
    acc = CpaAccumulator(byte_index, traces.n_samples)
    acc.update(traces.plaintexts, traces.observable)
    return acc.rank(true_key_byte)


def _fetch(source: TraceSource, start: int, stop: int) -> AttackTraceSet:
    if isinstance(source, AttackTraceSet):
        return source.rows(start, stop)
    return source(start, stop)


def measurements_to_disclosure(
    trace_generator: TraceSource,
    byte_index: int,
    true_key_byte: int,
    step: int,
    max_traces: int,
) -> Optional[int]:
    """
    Smallest checkpoint (multiple of step) where the true key ranks first and
    still ranks first at the next checkpoint.

    Args:
        trace_generator: trace set, or callable returning traces [start, stop)
        byte_index: attacked key byte
        true_key_byte: correct key byte value
        step: checkpoint spacing
        max_traces: last trace count considered

    Returns:
        Trace count, or None when the key is not disclosed within max_traces
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    acc: Optional[CpaAccumulator] = None
    done = 0
    previous: Optional[int] = None
    for checkpoint in range(step, max_traces + 1, step):
        batch = _fetch(trace_generator, done, checkpoint)
        if batch.n_traces < checkpoint - done:
            logger.debug(f"trace source exhausted at {done + batch.n_traces} traces")
            break
        if acc is None:
            acc = CpaAccumulator(byte_index, batch.n_samples)
        acc.update(batch.plaintexts, batch.observable)
        done = checkpoint
        try:
            rank = acc.rank(true_key_byte).rank_of_true_key
        except (AllColumnsDegenerate, InsufficientSamples):
            rank = None
        if rank == 0 and previous == 0:
            return checkpoint - step
        previous = rank
    return None


def guess_correlation_rows(result: KeyRankResult) -> list:
    """(key_guess, max_abs_corr) rows for CSV export."""
    return [(k, result.scores[k]) for k in range(256)]
