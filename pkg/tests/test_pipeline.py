"""Tests for config layering, the closed-loop engine, the run modes and the pipeline."""

import json
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pytest

from sclsim.controller import controller_tick, initial_states
from sclsim.countermeasures import overhead_accumulate
from sclsim.detection import LeakageScore
from sclsim.detection.banks import NicvBank
from sclsim.dut.aes import SBOX
from sclsim.dut.leakage import HW_TABLE
from sclsim.exceptions import ConfigError, NotPerfectSquare
from sclsim.floorplan.sensors import nearest_sensor, sense_trace
from sclsim.pipeline import simulation
from sclsim.pipeline.artifacts import write_readings
from sclsim.pipeline.config import env_overrides, load_config, parse_config_text
from sclsim.pipeline.runner import (
    SimulationPipeline,
    execute_attack,
    execute_closed_loop,
    execute_sweep,
    median_mtd,
    run_attack_sweep,
    run_calibration,
    run_closed_loop,
)
from sclsim.pipeline.simulation import ClosedLoopSimulator, SimulationOutcome, TraceExports
from sclsim.pipeline.world import DutSource, build_countermeasures, build_layout, spawn_streams
from sclsim.schemas import ControllerEvent, ExperimentConfig, OverheadReport


REFERENCE_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "reference.conf"


def simulate(config: ExperimentConfig, regime: str = "adaptive", **thresholds) -> SimulationOutcome:
    layout = build_layout(config)
    streams = spawn_streams(config.seed)
    bank = build_countermeasures(config, layout, streams["calibration"])
    return ClosedLoopSimulator(config, layout, bank, streams, regime=regime, **thresholds).run(config.n_traces)


def stepwise_reference(config: ExperimentConfig) -> Tuple[List[ControllerEvent], np.ndarray, OverheadReport]:
    """The closed loop evaluated one window at a time, consuming the random streams in the same order."""
    layout = build_layout(config)
    streams = spawn_streams(config.seed)
    bank = build_countermeasures(config, layout, streams["calibration"])
    params = config.sensors.params()
    n_windows, n_sensors, n_accs = layout.n_windows, layout.n_sensors, layout.n_accs
    nicv = NicvBank(n_sensors, n_windows, min_samples=config.detector.min_samples,
                    score_scale=config.detector.score_scale)
    states = initial_states(n_accs, config.controller.th_low, config.controller.th_high)
    events: List[ControllerEvent] = []
    observable = np.empty((config.n_traces, layout.n_steps))
    overhead = OverheadReport(windows_active=[0] * n_accs, total_windows=config.n_traces * n_windows)

    source = DutSource(config, layout, streams["plaintexts"], streams["dut_noise"])
    for start, pts, power in source.chunks(config.n_traces):
        n = len(pts)
        jitter = streams["sensor_jitter"].standard_normal((n, n_windows, n_sensors))
        attacker = streams["attacker"].standard_normal((n, layout.n_steps))
        for k in range(n):
            i = start + k
            draws = bank.draw(streams["countermeasure"])
            post = np.empty_like(power[k])
            for w in range(n_windows):
                t0, length = int(layout.window_starts[w]), int(layout.window_lengths[w])
                acc_on = np.array([st.is_on for st in states])
                applied = bank.apply(power[k], bank.state(acc_on), draws, w)
                post[t0:t0 + length] = applied.power[:length]
                energy = applied.acc_energy(length, n_accs)
                for acc_id in np.nonzero(acc_on)[0]:
                    overhead = overhead_accumulate(overhead, float(energy[acc_id]), int(acc_id))
                counts, _ = sense_trace(applied.power[:length], layout.attenuation, params, jitter[k, w:w + 1])
                candidate = nicv.candidate(counts.T, int(pts[k, config.detector.byte_index]), w)
                column = nicv.running_scores(candidate)[:, 0]
                window_idx = i * n_windows + w
                scores = [LeakageScore(s, window_idx, float(v)) for s, v in enumerate(column) if not np.isnan(v)]
                states, new_events, _ = controller_tick(scores, states, layout.acc_map, window_idx)
                if new_events:
                    events.extend(new_events)
                    nicv.reset()
                else:
                    nicv.commit(candidate)
            observable[i] = post.sum(axis=1) + config.attack.sigma_attacker * attacker[k]
    return events, observable, overhead


class TestConfigLayering:
    @pytest.fixture
    def config_file(self, tmp_path):
        path = tmp_path / "exp.conf"
        path.write_text("# experiment\ncontroller.th_high = 5\nseed=3\n\nn_traces=10  # short\n")
        return path

    def test_file_values(self, config_file):
        config = load_config(config_file, env={})
        assert config.controller.th_high == 5.0
        assert config.seed == 3 and config.n_traces == 10

    def test_precedence(self, config_file):
        env = {"SCLSIM__CONTROLLER__TH_HIGH": "6", "UNRELATED": "x"}
        assert load_config(config_file, env=env).controller.th_high == 6.0
        assert load_config(config_file, ["controller.th_high=7"], env=env).controller.th_high == 7.0
        assert load_config(config_file, ["seed=4"], seed=9, env=env).seed == 9

    def test_mode_selects_detector(self):
        assert load_config(mode="calibrate", env={}).detector.kind == "tvla_fixed_random"
        assert load_config(mode="run", env={}).detector.kind == "nicv"

    def test_parse_config_text(self):
        assert parse_config_text("a.b = 1 # c\n\n# only comment\nd=\n") == {"a.b": "1", "d": ""}
        with pytest.raises(ConfigError):
            parse_config_text("no separator here")

    def test_env_overrides(self):
        assert env_overrides({"SCLSIM__SWEEP__TH_LOW": "1,2", "PATH": "/bin"}) == {"sweep.th_low": "1,2"}

    @pytest.mark.parametrize("overrides,key_path", [
        (["sensors.gamma=-1"], "sensors.gamma"),
        (["controller.nonsense=1"], "controller.nonsense"),
        (["controller.th_low=5", "controller.th_high=4"], "controller"),
        (["detector.kind=tvla_fixed_random"], "detector.kind"),
        (["key=abcd"], "key"),
        (["countermeasure.kind=random_delay"], "countermeasure"),
        (["no_equals_sign"], "--set"),
    ])
    def test_errors_name_key_path(self, overrides, key_path):
        with pytest.raises(ConfigError) as excinfo:
            load_config(overrides=overrides, mode="run", env={})
        assert excinfo.value.key_path == key_path

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as excinfo:
            load_config(tmp_path / "absent.conf", env={})
        assert excinfo.value.key_path == "config"

    def test_layout_errors_surface_at_load(self):
        with pytest.raises(NotPerfectSquare):
            load_config(overrides=["sensors.n_sensors=3"], env={})


class TestClosedLoop:
    def test_deterministic(self, make_config):
        config = make_config(mode="run")
        a, b = run_closed_loop(config), run_closed_loop(config)
        assert a.model_dump_json() == b.model_dump_json()

    def test_matches_stepwise_reference(self, make_config):
        config = make_config({"controller.th_low": "8.5", "controller.th_high": "9.5"}, mode="run")
        events, observable, overhead = stepwise_reference(config)
        outcome = simulate(config)
        assert events, "reference config should produce controller activity"
        assert outcome.events == events
        assert np.array_equal(outcome.capture.observable, observable)
        assert outcome.overhead.windows_active == overhead.windows_active
        assert outcome.overhead.extra_energy == pytest.approx(overhead.extra_energy, rel=1e-9)

    def test_delay_matches_stepwise_reference(self, make_config):
        config = make_config({
            "controller.th_low": "8.5", "controller.th_high": "9.5",
            "countermeasure.kind": "random_delay", "countermeasure.max_shift": "2",
        }, mode="run")
        events, observable, _ = stepwise_reference(config)
        outcome = simulate(config)
        assert events and outcome.events == events
        assert np.array_equal(outcome.capture.observable, observable)

    def test_forced_delay_with_one_step_windows(self, make_config):
        config = make_config({
            "sensors.window": "1", "countermeasure.kind": "random_delay", "countermeasure.max_shift": "4",
        }, mode="run")
        off, forced = simulate(config, regime="off"), simulate(config, regime="forced")
        assert not np.array_equal(off.capture.observable, forced.capture.observable)
        assert forced.overhead.extra_energy == 0.0

    def test_events_alternate_per_acc(self, make_config):
        outcome = simulate(make_config({"controller.th_low": "8.5", "controller.th_high": "9.5"}, mode="run"))
        last = {}
        for event in outcome.events:
            assert last.get(event.acc_id, "deactivated") != event.transition
            last[event.acc_id] = event.transition

    def test_armed_but_off_is_identity(self, make_config):
        armed = simulate(make_config(mode="run"), regime="off")
        absent = simulate(make_config({"countermeasure.kind": "none"}, mode="run"), regime="off")
        assert np.array_equal(armed.capture.observable, absent.capture.observable)
        assert armed.overhead.extra_energy == 0.0
        assert armed.events == []

    def test_never_triggered_is_identity(self, make_config):
        quiet = {"controller.th_high": "1e9"}
        armed = simulate(make_config(quiet, mode="run"))
        absent = simulate(make_config({**quiet, "countermeasure.kind": "none"}, mode="run"))
        assert armed.events == [] and armed.overhead.extra_energy == 0.0
        assert np.array_equal(armed.capture.observable, absent.capture.observable)
        assert armed.sensor_scores == absent.sensor_scores

    def test_forced_regime(self, make_config):
        config = make_config(mode="run")
        outcome = simulate(config, regime="forced")
        assert outcome.events == []
        assert outcome.overhead.extra_energy > 0.0
        assert outcome.overhead.windows_active == [outcome.overhead.total_windows] * 4
        assert outcome.sensor_scores == []

    def test_report_contents(self, make_config):
        report = execute_closed_loop(make_config(mode="run")).report
        assert report.n_traces == 40 and report.windows_per_trace == 30
        assert report.total_windows == 1200
        assert [s.sensor_id for s in report.sensor_scores] == [0, 1, 2, 3]
        assert report.hook_violations == 0

    def test_wrong_mode(self, make_config):
        with pytest.raises(ConfigError):
            run_closed_loop(make_config(mode="attack"))


class TestCalibration:
    def test_series_and_means(self, make_config):
        report = run_calibration(make_config({"calibration.report_every": "10"}, mode="calibrate"))
        result = report.calibration
        assert [p.n_traces for p in result.series] == [10, 20, 30, 40]
        assert len(result.first_crossing) == 4
        assert len(result.region_means) == 16
        assert report.overhead.extra_energy == 0.0
        assert all(s.detector == "tvla_fixed_random" for s in report.sensor_scores)

    def test_deterministic(self, make_config):
        config = make_config(mode="calibrate")
        assert run_calibration(config).model_dump_json() == run_calibration(config).model_dump_json()


class TestAttackAndSweep:
    def test_median_mtd(self):
        assert median_mtd([32, None, 16]) == 32
        assert median_mtd([None, None, 16]) is None
        assert median_mtd([48, 16]) == 16
        assert median_mtd([None]) is None

    def test_attack_regimes(self, make_config):
        outcome = execute_attack(make_config(mode="attack"))
        regimes = outcome.report.attack.regimes
        assert [r.regime for r in regimes] == ["off", "forced", "adaptive"]
        assert all(len(r.mtd_replicates) == 1 for r in regimes)
        off, forced, _ = regimes
        assert off.extra_energy == 0.0 and forced.extra_energy > 0.0
        assert set(outcome.captures) == {"off", "forced", "adaptive"}
        assert all(c.n_traces == 64 for c in outcome.captures.values())

    def test_attack_deterministic(self, make_config):
        config = make_config(mode="attack")
        assert execute_attack(config).report.model_dump_json() == execute_attack(config).report.model_dump_json()

    async def test_sweep_grid_and_workers(self, make_config):
        serial = await execute_sweep(make_config({"sweep.workers": "1"}, mode="sweep"))
        parallel = await execute_sweep(make_config({"sweep.workers": "4"}, mode="sweep"))
        rows = serial.report.frontier
        assert [(r.th_high, r.th_low) for r in rows] == [
            (h, lo) for h in (4.5, 6.0, 8.0) for lo in (1.0, 1.5, 2.0)
        ]
        assert [r.model_dump() for r in rows] == [r.model_dump() for r in parallel.report.frontier]

    def test_run_attack_sweep_dispatches_on_mode(self, make_config):
        attack = run_attack_sweep(make_config(mode="attack"))
        assert attack.attack is not None and not attack.frontier
        sweep = run_attack_sweep(make_config({"sweep.th_high": "6", "sweep.th_low": "1"}, mode="sweep"))
        assert sweep.attack is None
        assert [(r.th_high, r.th_low) for r in sweep.frontier] == [(6.0, 1.0)]

    def test_sweep_rejects_overlapping_grid(self, make_config):
        with pytest.raises(ConfigError):
            make_config({"sweep.th_low": "1,5", "sweep.th_high": "4.5,6"}, mode="sweep")


class TestSimulationPipeline:
    async def test_run_writes_artifacts_and_caches(self, make_config, tmp_path):
        config = make_config(mode="run")
        first = await SimulationPipeline(config, tmp_path, show_progress=False).run()
        assert first["status"] == "completed" and not first["cached"]

        run_dir = Path(first["run_dir"])
        for name in ("region_traces", "readings", "scores", "events", "attack_traces"):
            assert (run_dir / "csv" / f"{name}.csv").exists()
        for name in ("run.log", "events.jsonl", "summary.json"):
            assert (run_dir / "logs" / "run" / name).exists()
        metadata = json.loads((run_dir / "metadata.json").read_text())
        assert metadata["status"] == "completed"
        header, *readings = (run_dir / "csv" / "readings.csv").read_text().splitlines()
        assert header == "trace_id,window_idx,sensor_id,count"
        assert len(readings) == 4 * 30 * 4
        assert readings[-1].startswith("3,119,3,")
        assert load_config(run_dir / "config.conf", env={}) == config
        assert "config.conf" in metadata["artifacts"]

        second = await SimulationPipeline(config, tmp_path, show_progress=False).run()
        assert second["cached"] and second["run_id"] == first["run_id"]
        assert second["report"].model_dump_json() == first["report"].model_dump_json()

        forced = await SimulationPipeline(config, tmp_path, show_progress=False).run(force=True)
        assert not forced["cached"]

    def test_readings_csv_flags_saturation(self, tmp_path, caplog):
        counts = np.array([[1000, 0], [990, 5]])
        saturated = np.array([[False, True], [False, False]])
        exports = TraceExports(readings=[(2, counts, saturated)])
        with caplog.at_level("WARNING", logger="sclsim.pipeline.artifacts"):
            path = write_readings(tmp_path / "readings.csv", exports, windows_per_trace=2)
        assert path.read_text().splitlines()[1:] == ["2,4,0,1000", "2,4,1,0", "2,5,0,990", "2,5,1,5"]
        assert "1 of 4 exported sensor readings saturated" in caplog.text

    async def test_seed_changes_run_id(self, make_config, tmp_path):
        a = await SimulationPipeline(make_config(mode="run"), tmp_path, show_progress=False).run()
        b = await SimulationPipeline(make_config(mode="run", seed="8"), tmp_path, show_progress=False).run()
        assert a["run_id"] != b["run_id"] and not b["cached"]

    async def test_sweep_frontier_csv(self, make_config, tmp_path):
        config = make_config({"sweep.th_high": "6", "sweep.th_low": "1,2"}, mode="sweep")
        result = await SimulationPipeline(config, tmp_path, show_progress=False).run()
        lines = (Path(result["run_dir"]) / "csv" / "frontier.csv").read_text().splitlines()
        assert lines[0] == "th_high,th_low,mtd,extra_energy,activations"
        assert len(lines) == 3


@pytest.mark.slow
class TestAcceptance:
    """Long Monte-Carlo checks of the whole loop."""

    def _leaky(self, make_config, overrides, **top):
        return make_config({
            "sensors.window": "1",
            "detector.min_samples": "2048",
            "leakage.alpha": "2",
            "leakage.sigma_noise": "0.5",
            "harness.chunk_size": "256",
            **overrides,
        }, **top)

    def test_first_activation_localizes_leak(self, make_config, floorplan):
        placements = build_layout(make_config()).placements
        for region in floorplan.regions:
            config = self._leaky(make_config, {
                "floorplan.op_map": f"region:{region.region_id}",
                "controller.th_high": "5.2",
                "countermeasure.sigma_cm": "32",
            }, mode="run", n_traces="2048")
            events = simulate(config).events
            assert events, f"no activation for region {region.region_id}"
            assert events[0].transition == "activated"
            assert events[0].sensor_id == nearest_sensor(region.x, region.y, placements)

    def test_no_leakage_no_activation(self, make_config):
        config = self._leaky(make_config, {"leakage.alpha": "0", "sensors.window": "16"}, mode="run", n_traces="2100")
        outcome = simulate(config)
        assert outcome.events == []
        assert outcome.overhead.extra_energy == 0.0

    def test_calibration_null(self, make_config):
        quiet = 0
        for seed in range(100):
            config = make_config(
                {"leakage.alpha": "0", "sensors.window": "1", "harness.chunk_size": "256"},
                mode="calibrate", n_traces="2000", seed=str(seed),
            )
            scores = run_calibration(config).sensor_scores
            quiet += all(s.max_score is None or s.max_score < 4.5 for s in scores)
        assert quiet >= 95

    def test_calibration_detects_fixed_class(self, make_config):
        key = ExperimentConfig().key_bytes
        target = next(v for v in range(256) if HW_TABLE[SBOX[v]] == 8)
        fixed = bytes([target ^ key[0]]) + bytes(15)
        config = make_config(
            {"sensors.window": "1", "harness.chunk_size": "256"},
            mode="calibrate", n_traces="5000", fixed_plaintext=fixed.hex(),
        )
        crossing = run_calibration(config).calibration.first_crossing
        assert crossing[0] is not None and crossing[0] <= 5000

    def test_efficacy_ordering(self):
        def inf(v):
            return float("inf") if v is None else v

        mtd = {"off": [], "forced": [], "adaptive": []}
        energy = {"off": [], "forced": [], "adaptive": []}
        for seed in range(5):
            config = load_config(REFERENCE_CONFIG, seed=seed, mode="attack", env={})
            for result in execute_attack(config).report.attack.regimes:
                mtd[result.regime].append(result.mtd)
                energy[result.regime].append(result.extra_energy)
        off, adaptive, forced = (inf(median_mtd(mtd[r])) for r in ("off", "adaptive", "forced"))
        assert off <= adaptive <= forced
        assert off < adaptive
        assert np.median(energy["adaptive"]) < np.median(energy["forced"])

    def test_activation_quiets_alarming_sensor(self, monkeypatch):
        config = load_config(REFERENCE_CONFIG, ["n_traces=2200"], mode="run", env={})
        original = simulation.first_transition
        while_on: List[float] = []

        def recording(acc_scores, states):
            for acc_id, state in enumerate(states):
                row = acc_scores[acc_id]
                if state.is_on and not np.isnan(row).all():
                    while_on.append(float(np.nanmax(row)))
            return original(acc_scores, states)

        monkeypatch.setattr(simulation, "first_transition", recording)
        outcome = simulate(config)
        assert outcome.events[0].transition == "activated"
        assert outcome.events[1].transition == "deactivated"
        assert while_on and max(while_on) < config.controller.th_high

    async def test_sweep_overhead_falls_with_th_high(self):
        config = load_config(REFERENCE_CONFIG, ["sweep.th_low=3.0"], mode="sweep", env={})
        rows = (await execute_sweep(config)).report.frontier
        assert [r.th_high for r in rows] == [4.5, 6.0, 8.0]
        energy = [r.extra_energy for r in rows]
        assert energy[0] > 0.0 and energy[-1] == 0.0
        for earlier, later in zip(energy, energy[1:]):
            assert later <= earlier * 1.01

    def test_forced_full_equalizer_hides_key(self):
        config = load_config(REFERENCE_CONFIG, [
            "countermeasure.kind=equalizer",
            "countermeasure.strength=1",
            "leakage.sigma_noise=0",
            "attack.sigma_attacker=0",
        ], mode="attack", env={})
        regimes = {r.regime: r for r in execute_attack(config).report.attack.regimes}
        assert regimes["forced"].mtd is None
        assert regimes["off"].mtd == config.attack.step
