"""Tests for the CPA oracle, measurements-to-disclosure and trace files."""

import numpy as np
import pytest

from sclsim.attack import (
    AttackTraceSet,
    CpaAccumulator,
    cpa_rank,
    export_traces,
    guess_correlation_rows,
    hypothesis_matrix,
    import_traces,
    measurements_to_disclosure,
    pearson,
)
from sclsim.dut.aes import SBOX, event_schedule, trace_batch
from sclsim.dut.leakage import HW_TABLE, emit_power_batch
from sclsim.exceptions import (
    AllColumnsDegenerate,
    DegenerateVariance,
    EmptyTraceFile,
    InsufficientSamples,
    LengthMismatch,
    MalformedTraceRow,
    TraceDimensionMismatch,
)
from sclsim.schemas import LeakageModelParams

from .conftest import KEY


def noiseless_traces(n: int, floorplan, seed: int = 0) -> AttackTraceSet:
    """Whole-chip power (sum over regions) of n encryptions with no noise."""
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 256, (n, 16), dtype=np.uint8)
    _, values, prevs = trace_batch(pts, KEY)
    params = LeakageModelParams(alpha=1.0, beta=0.0, sigma_noise=0.0)
    power = emit_power_batch(values, prevs, event_schedule(floorplan), params, rng)
    return AttackTraceSet(plaintexts=pts, observable=power.sum(axis=2))


def noise_traces(n: int, n_samples: int, rng: np.random.Generator) -> AttackTraceSet:
    return AttackTraceSet(
        plaintexts=rng.integers(0, 256, (n, 16), dtype=np.uint8),
        observable=rng.standard_normal((n, n_samples)),
    )


class TestPearson:
    def test_perfect_correlation(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_matches_numpy(self, rng):
        x, y = rng.normal(size=(2, 200))
        assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], rel=1e-10)

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            pearson([1, 2, 3], [1, 2])
        with pytest.raises(InsufficientSamples):
            pearson([1], [2])
        with pytest.raises(DegenerateVariance):
            pearson([1, 1, 1], [1, 2, 3])


class TestHypotheses:
    def test_matrix_entries(self, rng):
        pts = rng.integers(0, 256, (5, 16), dtype=np.uint8)
        m = hypothesis_matrix(pts, 3)
        assert m.shape == (5, 256)
        for i in range(5):
            for k in (0, 17, 255):
                assert m[i, k] == HW_TABLE[SBOX[pts[i, 3] ^ k]]

    def test_accumulator_matches_pearson(self, rng):
        traces = noise_traces(300, 4, rng)
        acc = CpaAccumulator(0, 4)
        acc.update(traces.plaintexts[:120], traces.observable[:120])
        acc.update(traces.plaintexts[120:], traces.observable[120:])
        corr = acc.correlations()
        m = hypothesis_matrix(traces.plaintexts, 0)
        for k in (0, 99, 200):
            for j in range(4):
                assert corr[k, j] == pytest.approx(pearson(m[:, k], traces.observable[:, j]), abs=1e-9)


class TestCpaRank:
    def test_noiseless_recovers_key(self, floorplan):
        result = cpa_rank(noiseless_traces(256, floorplan), 0, KEY[0])
        assert result.rank_of_true_key == 0
        assert result.ranked_guesses[0] == KEY[0]
        assert result.scores[KEY[0]] == pytest.approx(1.0, abs=1e-9)

    def test_pure_noise_gives_no_advantage(self):
        rng = np.random.default_rng(99)
        ranks = [cpa_rank(noise_traces(1000, 32, rng), 0, 0x2B).rank_of_true_key for _ in range(100)]
        assert np.median(ranks) >= 64

    def test_ties_broken_by_key_value(self):
        class FixedScores(CpaAccumulator):
            def guess_scores(self):
                scores = np.full(256, 0.1)
                scores[[9, 200, 4]] = 0.5
                return scores

        result = FixedScores(0, 1).rank(200)
        assert result.ranked_guesses[:4] == [4, 9, 200, 0]
        assert result.rank_of_true_key == 2

    def test_affine_invariance(self, floorplan, rng):
        traces = noiseless_traces(64, floorplan)
        traces = AttackTraceSet(traces.plaintexts, traces.observable + rng.normal(0, 0.5, traces.observable.shape))
        scaled = AttackTraceSet(traces.plaintexts, 3.0 * traces.observable + 7.0)
        a, b = cpa_rank(traces, 0, KEY[0]), cpa_rank(scaled, 0, KEY[0])
        assert a.ranked_guesses == b.ranked_guesses
        assert a.scores == pytest.approx(b.scores, abs=1e-9)

    def test_constant_observable(self, rng):
        traces = AttackTraceSet(rng.integers(0, 256, (50, 16), dtype=np.uint8), np.full((50, 8), 3.0))
        with pytest.raises(AllColumnsDegenerate):
            cpa_rank(traces, 0, 0)

    def test_constant_columns_are_ignored(self, floorplan):
        traces = noiseless_traces(128, floorplan)
        padded = AttackTraceSet(traces.plaintexts, np.hstack([traces.observable, np.full((128, 3), 2.0)]))
        assert cpa_rank(padded, 0, KEY[0]).scores == pytest.approx(cpa_rank(traces, 0, KEY[0]).scores)

    def test_single_trace(self, rng):
        with pytest.raises(InsufficientSamples):
            cpa_rank(noise_traces(1, 4, rng), 0, 0)

    def test_guess_rows(self, floorplan):
        rows = guess_correlation_rows(cpa_rank(noiseless_traces(32, floorplan), 0, KEY[0]))
        assert len(rows) == 256
        assert [k for k, _ in rows] == list(range(256))


class TestMeasurementsToDisclosure:
    def test_noiseless(self, floorplan):
        assert measurements_to_disclosure(noiseless_traces(512, floorplan), 0, KEY[0], 16, 512) == 16

    def test_noise_never_discloses(self):
        traces = noise_traces(2000, 16, np.random.default_rng(3))
        assert measurements_to_disclosure(traces, 0, 0x2B, 1000, 2000) is None

    def test_step_beyond_budget(self, floorplan):
        assert measurements_to_disclosure(noiseless_traces(64, floorplan), 0, KEY[0], 100, 64) is None

    def test_callable_source(self, floorplan):
        traces = noiseless_traces(512, floorplan)
        calls = []

        def source(start, stop):
            calls.append((start, stop))
            return traces.rows(start, stop)

        assert measurements_to_disclosure(source, 0, KEY[0], 16, 512) == 16
        assert calls == [(0, 16), (16, 32)]

    def test_exhausted_source(self, floorplan):
        assert measurements_to_disclosure(noiseless_traces(16, floorplan), 0, KEY[0], 16, 512) is None

    def test_bad_step(self, floorplan):
        with pytest.raises(ValueError):
            measurements_to_disclosure(noiseless_traces(16, floorplan), 0, KEY[0], 0, 16)


class TestTraceFiles:
    def test_round_trip(self, tmp_path, rng):
        traces = noise_traces(3, 5, rng)
        loaded = import_traces(export_traces(traces, tmp_path / "traces.csv"))
        assert np.array_equal(loaded.plaintexts, traces.plaintexts)
        assert np.array_equal(loaded.observable, traces.observable)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(EmptyTraceFile):
            import_traces(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text("trace_id,plaintext,time_idx,power\n")
        with pytest.raises(EmptyTraceFile):
            import_traces(path)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("trace_id,plaintext,power\n0,00000000000000000000000000000000,1.0\n")
        with pytest.raises(MalformedTraceRow) as excinfo:
            import_traces(path)
        assert excinfo.value.line == 1

    def test_malformed_row_names_line(self, tmp_path):
        pt = "00" * 16
        path = tmp_path / "bad.csv"
        path.write_text(f"trace_id,plaintext,time_idx,power\n0,{pt},0,1.0\n0,{pt},1,abc\n")
        with pytest.raises(MalformedTraceRow) as excinfo:
            import_traces(path)
        assert excinfo.value.line == 3

    def test_ragged_traces(self, tmp_path):
        pt = "00" * 16
        path = tmp_path / "ragged.csv"
        path.write_text(f"trace_id,plaintext,time_idx,power\n0,{pt},0,1.0\n0,{pt},1,2.0\n1,{pt},0,3.0\n")
        with pytest.raises(TraceDimensionMismatch):
            import_traces(path)
