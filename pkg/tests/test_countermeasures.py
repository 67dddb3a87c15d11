"""Tests for the countermeasure transforms, the ACC bank and overhead accounting."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from sclsim.controller import build_sensor_acc_map
from sclsim.countermeasures import CountermeasureBank, apply_cm, armed_summary, overhead_accumulate
from sclsim.floorplan.grid import place_sensors_even
from sclsim.schemas import CountermeasureConfig, CountermeasureKind, OverheadReport, SensorAccMap


class TestApplyCm:
    def test_equalizer_full_strength(self, rng):
        out, energy = apply_cm([1.0, 2.0, 3.0], CountermeasureKind.equalizer(1.0, 4.0), rng)
        assert out.tolist() == [4.0, 4.0, 4.0]
        assert energy == 6.0

    def test_equalizer_never_charges_for_removed_power(self, rng):
        out, energy = apply_cm([6.0, 8.0], CountermeasureKind.equalizer(0.5, 4.0), rng)
        assert out.tolist() == [5.0, 6.0]
        assert energy == 0.0

    def test_equalizer_scales_variance(self, rng):
        series = rng.normal(3.0, 2.0, 5000)
        for s in (0.0, 0.25, 0.5, 0.9):
            out, _ = apply_cm(series, CountermeasureKind.equalizer(s, 1.0), rng)
            assert out.var() == pytest.approx((1 - s) ** 2 * series.var(), rel=1e-9)

    def test_noise_injector_statistics(self):
        sigma = 16.0
        out, energy = apply_cm(np.full(40_000, 5.0), CountermeasureKind.noise_injector(sigma), np.random.default_rng(8))
        assert out.mean() == pytest.approx(5.0, abs=0.05 * sigma)
        assert out.std() == pytest.approx(sigma, rel=0.05)
        assert energy / 40_000 == pytest.approx(sigma * math.sqrt(2 / math.pi), rel=0.05)

    def test_zero_sigma_is_identity(self, rng):
        out, energy = apply_cm([1.0, 2.0], CountermeasureKind.noise_injector(0.0), rng)
        assert out.tolist() == [1.0, 2.0] and energy == 0.0

    def test_random_delay_is_a_rotation(self, rng):
        series = np.arange(8, dtype=float)
        for _ in range(20):
            out, energy = apply_cm(series, CountermeasureKind.random_delay(5), rng)
            assert energy == 0.0
            shift = int(np.argmax(out == 0.0))
            assert np.array_equal(out, np.roll(series, shift))

    def test_random_delay_zero_shift(self, rng):
        out, _ = apply_cm([3.0, 1.0, 2.0], CountermeasureKind.random_delay(0), rng)
        assert out.tolist() == [3.0, 1.0, 2.0]

    def test_random_delay_moves_whole_windows(self, rng):
        series = np.arange(12, dtype=float)
        for _ in range(20):
            out, _ = apply_cm(series, CountermeasureKind.random_delay(2), rng, window=4)
            assert int(np.argmax(out == 0.0)) in (0, 4, 8)

    def test_random_delay_needs_a_window_of_shift(self):
        with pytest.raises(ValidationError):
            CountermeasureConfig(kind="random_delay", max_shift=0)
        with pytest.raises(ValidationError):
            CountermeasureConfig(per_acc="2:random_delay", max_shift=0)
        assert CountermeasureConfig(kind="noise_injector", max_shift=0).max_shift == 0

    def test_kind_validation(self):
        with pytest.raises(ValidationError):
            CountermeasureKind(kind="shielding")
        with pytest.raises(ValidationError):
            CountermeasureKind.equalizer(1.5, 0.0)


class TestOverhead:
    def test_empty_report(self):
        report = OverheadReport(total_windows=10)
        assert report.extra_energy == 0.0
        assert report.activations_duty == 0.0

    def test_accumulate_grows_acc_list(self):
        report = overhead_accumulate(OverheadReport(total_windows=10), 2.5, acc_id=2, windows=3)
        assert report.windows_active == [0, 0, 3]
        assert report.extra_energy == 2.5

    def test_order_independent(self):
        steps = [(1.0, 0, 2), (2.5, 1, 1), (0.5, 0, 4)]
        forward = OverheadReport(total_windows=10)
        for energy, acc, w in steps:
            forward = overhead_accumulate(forward, energy, acc, w)
        backward = OverheadReport(total_windows=10)
        for energy, acc, w in reversed(steps):
            backward = overhead_accumulate(backward, energy, acc, w)
        assert forward.windows_active == backward.windows_active == [6, 1]
        assert forward.extra_energy == pytest.approx(backward.extra_energy)

    def test_duty(self):
        report = OverheadReport(extra_energy=1.0, windows_active=[5, 0], total_windows=10)
        assert report.activations_duty == 0.25

    def test_active_windows_bounded(self):
        with pytest.raises(ValidationError):
            OverheadReport(windows_active=[11], total_windows=10)
        with pytest.raises(ValidationError):
            OverheadReport(extra_energy=-1.0)


class TestCountermeasureBank:
    N_STEPS, WINDOW = 32, 8

    @pytest.fixture
    def acc_map(self, floorplan) -> SensorAccMap:
        return build_sensor_acc_map(floorplan, place_sensors_even(4, 4, 4))

    def _bank(self, acc_map, region_means=None, **cm) -> CountermeasureBank:
        config = CountermeasureConfig(**cm)
        return CountermeasureBank.from_config(config, acc_map, 16, self.N_STEPS, self.WINDOW, region_means)

    def test_armed_summary_with_override(self, acc_map):
        bank = self._bank(acc_map, per_acc="1:none,3:equalizer")
        assert armed_summary(bank) == {0: "noise_injector", 1: "none", 2: "noise_injector", 3: "equalizer"}
        assert bank.is_armed and bank.needs_targets

    def test_unarmed_bank_draws_nothing(self, acc_map, rng):
        bank = self._bank(acc_map, kind="none")
        assert not bank.is_armed
        draws = bank.draw(rng)
        assert draws.noise is None and draws.delay is None

    def test_state_skips_unarmed_acc(self, acc_map):
        bank = self._bank(acc_map, per_acc="1:none")
        state = bank.state([False, True, True, False])
        for r in acc_map.acc_regions[1]:
            assert state.region_owner[r] == -1
        for r in acc_map.acc_regions[2]:
            assert state.region_owner[r] == 2
        assert state.region_active.sum() == len(acc_map.acc_regions[2])

    def test_nothing_active_is_identity(self, acc_map, rng):
        bank = self._bank(acc_map)
        power = rng.normal(size=(self.N_STEPS, 16))
        applied = bank.apply(power, bank.state([False] * 4), bank.draw(rng))
        assert applied.power is power
        assert applied.acc_energy(self.N_STEPS, 4).tolist() == [0.0] * 4

    def test_noise_confined_to_active_regions(self, acc_map, rng):
        bank = self._bank(acc_map, sigma_cm=2.0)
        power = rng.normal(size=(self.N_STEPS, 16))
        draws = bank.draw(rng)
        applied = bank.apply(power, bank.state([True, False, False, False]), draws)
        protected = acc_map.acc_regions[0]
        others = [r for r in range(16) if r not in protected]
        assert np.array_equal(applied.power[:, others], power[:, others])
        assert np.allclose(applied.power[:, protected], power[:, protected] + 2.0 * draws.noise[:, protected])
        energy = applied.acc_energy(self.N_STEPS, 4)
        assert energy[0] == pytest.approx(2.0 * np.abs(draws.noise[:, protected]).sum())
        assert energy[1:].tolist() == [0.0, 0.0, 0.0]

    def test_segment_uses_matching_draws(self, acc_map, rng):
        bank = self._bank(acc_map, sigma_cm=1.0)
        power = rng.normal(size=(self.N_STEPS, 16))
        draws = bank.draw(rng)
        state = bank.state([True] * 4)
        whole = bank.apply(power, state, draws).power
        tail = bank.apply(power, state, draws, first_window=2).power
        assert np.array_equal(tail, whole[2 * self.WINDOW:])

    def test_acc_energy_prefix(self, acc_map, rng):
        bank = self._bank(acc_map, sigma_cm=1.0)
        draws = bank.draw(rng)
        applied = bank.apply(np.zeros((self.N_STEPS, 16)), bank.state([True] * 4), draws)
        prefix = applied.acc_energy(self.WINDOW, 4)
        expected = [np.abs(draws.noise[: self.WINDOW, acc_map.acc_regions[a]]).sum() for a in range(4)]
        assert prefix == pytest.approx(expected)

    def test_equalizer_targets_from_region_means(self, acc_map, rng):
        means = np.arange(16, dtype=float)
        bank = self._bank(acc_map, region_means=means, kind="equalizer")
        assert np.array_equal(bank.targets, means)
        applied = bank.apply(rng.normal(size=(self.N_STEPS, 16)), bank.state([True] * 4), bank.draw(rng))
        assert np.allclose(applied.power, np.broadcast_to(means, (self.N_STEPS, 16)))

    def test_explicit_target_wins(self, acc_map):
        bank = self._bank(acc_map, region_means=np.arange(16.0), kind="equalizer", target=3.0)
        assert bank.targets.tolist() == [3.0] * 16

    def test_random_delay_replays_earlier_windows(self, acc_map, rng):
        bank = self._bank(acc_map, kind="random_delay", max_shift=5)
        power = np.tile(np.arange(self.N_STEPS, dtype=float)[:, None], (1, 16))
        draws = bank.draw(rng)
        applied = bank.apply(power, bank.state([True] * 4), draws)
        for t in range(self.N_STEPS):
            w = t // self.WINDOW
            for r in range(16):
                delay = int(np.floor(draws.delay[w, r] * 6))
                assert applied.power[t, r] == (t - delay * self.WINDOW) % self.N_STEPS
        assert applied.acc_energy(self.N_STEPS, 4).tolist() == [0.0] * 4

    def test_random_delay_with_one_step_windows(self, acc_map):
        bank = CountermeasureBank.from_config(
            CountermeasureConfig(kind="random_delay", max_shift=3), acc_map, 16, self.N_STEPS, 1
        )
        power = np.tile(np.arange(self.N_STEPS, dtype=float)[:, None], (1, 16))
        applied = bank.apply(power, bank.state([True] * 4), bank.draw(np.random.default_rng(3)))
        assert not np.array_equal(applied.power, power)
        lag = (np.arange(self.N_STEPS)[:, None] - applied.power) % self.N_STEPS
        assert set(np.unique(lag)) <= {0, 1, 2, 3}

    def test_random_delay_segment_reads_earlier_steps(self, acc_map, rng):
        bank = self._bank(acc_map, kind="random_delay", max_shift=3)
        power = rng.normal(size=(self.N_STEPS, 16))
        draws = bank.draw(rng)
        state = bank.state([True] * 4)
        whole = bank.apply(power, state, draws).power
        tail = bank.apply(power, state, draws, first_window=3).power
        assert np.array_equal(tail, whole[3 * self.WINDOW:])
