"""
The simulation engines.

ClosedLoopSimulator runs the detect-and-mitigate loop trace by trace. Inside a
trace it works in segments: starting at window `pos`, every remaining window
is evaluated at once under the current set of active ACCs (countermeasure,
sensing, NICV candidate, running scores). If some ACC would change mode at
window pos + j, windows pos .. pos + j are kept, the controller ticks, the
detector starts a new epoch and the rest of the trace is re-evaluated under
the new active set. Otherwise the whole candidate is committed. The result
is identical to stepping window by window.

simulate_calibration runs the fixed-vs-random TVLA campaign.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from sclsim.attack.cpa import AttackTraceSet
from sclsim.controller.hysteresis import ACTIVATED, ON, controller_tick, first_transition, initial_states
from sclsim.countermeasures.cells import CountermeasureBank, CountermeasureDraws, overhead_accumulate
from sclsim.detection.banks import NicvBank, TvlaBank, argmax_rows, fmax_rows
from sclsim.detection.statistics import LeakageScore
from sclsim.floorplan.sensors import sense_trace
from sclsim.hooks.manager import HookManager
from sclsim.pipeline.world import DutSource, Layout
from sclsim.schemas import (
    ControllerEvent,
    DetectorName,
    ExperimentConfig,
    OverheadReport,
    Regime,
    SensorScoreSummary,
    TvlaSeriesPoint,
)

logger = logging.getLogger(__name__)

REGIMES: Tuple[Regime, ...] = ("off", "forced", "adaptive")


def _optional(values: np.ndarray) -> List[Optional[float]]:
    return [None if np.isnan(v) else float(v) for v in values]


@dataclass
class TraceExports:
    """Per-trace data kept for the CSV artifacts."""
    region_power: List[Tuple[int, np.ndarray]] = field(default_factory=list)
    readings: List[Tuple[int, np.ndarray, np.ndarray]] = field(default_factory=list)
    scores: List[Tuple[int, int, float]] = field(default_factory=list)


class ScoreTracker:
    """Running max / final / peak position of every sensor's score series."""

    def __init__(self, n_sensors: int, detector: DetectorName):
        self.detector = detector
        self.max = np.full(n_sensors, np.nan)
        self.final = np.full(n_sensors, np.nan)
        self.peak = np.full(n_sensors, -1, dtype=np.int64)
        self.scored = np.zeros(n_sensors, dtype=np.int64)

    def observe(self, segment: np.ndarray, peak_of: Callable[[int, int], int], weight: int = 1) -> None:
        """
        Fold in consecutive scores.

        Args:
            segment: (n_sensors, L) scores, NaN = no score
            peak_of: (sensor, column) -> window position responsible for that score
            weight: windows each column stands for
        """
        if segment.shape[1] == 0:
            return
        self.scored += (~np.isnan(segment)).sum(axis=1) * weight
        self.final = segment[:, -1].copy()
        seg_max = fmax_rows(segment)
        better = ~np.isnan(seg_max) & (np.isnan(self.max) | (seg_max > self.max))
        for s in np.nonzero(better)[0]:
            self.max[s] = seg_max[s]
            self.peak[s] = peak_of(int(s), int(np.nanargmax(segment[s])))

    def summaries(self) -> List[SensorScoreSummary]:
        return [
            SensorScoreSummary(
                sensor_id=s,
                detector=self.detector,
                max_score=None if np.isnan(self.max[s]) else float(self.max[s]),
                final_score=None if np.isnan(self.final[s]) else float(self.final[s]),
                peak_window=None if self.peak[s] < 0 else int(self.peak[s]),
                scored_windows=int(self.scored[s]),
            )
            for s in range(len(self.max))
        ]


@dataclass
class TraceResult:
    power: np.ndarray
    counts: np.ndarray
    saturated: np.ndarray
    acc_energy: np.ndarray
    acc_windows: np.ndarray


@dataclass
class SimulationOutcome:
    regime: Regime
    n_traces: int
    windows_per_trace: int
    events: List[ControllerEvent]
    overhead: OverheadReport
    sensor_scores: List[SensorScoreSummary]
    capture: AttackTraceSet
    exports: TraceExports

    @property
    def activations(self) -> int:
        return sum(1 for e in self.events if e.transition == ACTIVATED)


class ClosedLoopSimulator:
    """Emit, protect, sense, detect and control, one encryption after another."""

    def __init__(
        self,
        config: ExperimentConfig,
        layout: Layout,
        bank: CountermeasureBank,
        streams: Dict[str, np.random.Generator],
        *,
        regime: Regime = "adaptive",
        th_low: Optional[float] = None,
        th_high: Optional[float] = None,
        hooks: Optional[HookManager] = None,
    ):
        """
        Args:
            config: experiment config
            layout: static layout
            bank: armed countermeasure cells
            streams: named random streams of the run
            regime: 'adaptive' closes the loop; 'off' and 'forced' pin every ACC
            th_low: deactivation threshold (default from config)
            th_high: activation threshold (default from config)
            hooks: hook manager receiving trace, transition and epoch payloads
        """
        if regime not in REGIMES:
            raise ValueError(f"unknown regime '{regime}'")
        self.config = config
        self.layout = layout
        self.bank = bank
        self.streams = streams
        self.regime = regime
        self.th_low = config.controller.th_low if th_low is None else th_low
        self.th_high = config.controller.th_high if th_high is None else th_high
        self.hooks = hooks
        self.detect = regime == "adaptive"
        self.sensor_params = config.sensors.params()
        self.acc_sensors = [np.array(layout.acc_map.sensors_of(a), dtype=np.intp) for a in range(layout.n_accs)]

    def _fire(self, point: str, **payload) -> None:
        if self.hooks is not None:
            self.hooks.fire(point, **payload)

    def _acc_scores(self, running: np.ndarray) -> np.ndarray:
        return np.stack([np.fmax.reduce(running[rows], axis=0) for rows in self.acc_sensors])

    def run(self, n_traces: int) -> SimulationOutcome:
        """Simulate n_traces encryptions and return events, overhead, scores and the attacker's capture."""
        cfg, layout = self.config, self.layout
        n_sensors, n_windows, n_accs = layout.n_sensors, layout.n_windows, layout.n_accs
        self.nicv = NicvBank(
            n_sensors,
            n_windows,
            min_samples=cfg.detector.min_samples,
            score_scale=cfg.detector.score_scale,
        )
        self.states = initial_states(n_accs, self.th_low, self.th_high)
        if self.regime == "forced":
            self.states = [replace(st, mode=ON) for st in self.states]
        self.events: List[ControllerEvent] = []
        self.epoch = 0
        self.tracker = ScoreTracker(n_sensors, "nicv")

        byte = cfg.detector.byte_index
        sigma_attacker = cfg.attack.sigma_attacker
        export_limit = cfg.harness.export_limit
        overhead = OverheadReport(windows_active=[0] * n_accs, total_windows=n_traces * n_windows)
        plaintexts = np.empty((n_traces, 16), dtype=np.uint8)
        observable = np.empty((n_traces, layout.n_steps))
        exports = TraceExports()

        source = DutSource(cfg, layout, self.streams["plaintexts"], self.streams["dut_noise"])
        for start, pts, power in source.chunks(n_traces):
            n = len(pts)
            jitter = self.streams["sensor_jitter"].standard_normal((n, n_windows, n_sensors))
            attacker_noise = self.streams["attacker"].standard_normal((n, layout.n_steps))
            plaintexts[start:start + n] = pts
            for k in range(n):
                i = start + k
                draws = self.bank.draw(self.streams["countermeasure"])
                trace = self._simulate_trace(i, int(pts[k, byte]), power[k], jitter[k], draws)
                observable[i] = trace.power.sum(axis=1) + sigma_attacker * attacker_noise[k]
                for acc_id in np.nonzero(trace.acc_windows)[0]:
                    overhead = overhead_accumulate(
                        overhead, float(trace.acc_energy[acc_id]), int(acc_id), int(trace.acc_windows[acc_id])
                    )
                self._fire("on_trace", trace_idx=i, acc_energy=trace.acc_energy, acc_on=trace.acc_windows > 0)
                if i < export_limit:
                    exports.region_power.append((i, trace.power))
                    exports.readings.append((i, trace.counts, trace.saturated))
                if self.detect:
                    last_window = (i + 1) * n_windows - 1
                    exports.scores.extend(
                        (s, last_window, float(v)) for s, v in enumerate(self.tracker.final) if not np.isnan(v)
                    )
            logger.debug(f"{self.regime}: {start + n}/{n_traces} traces, {len(self.events)} events")

        return SimulationOutcome(
            regime=self.regime,
            n_traces=n_traces,
            windows_per_trace=n_windows,
            events=self.events,
            overhead=overhead,
            sensor_scores=self.tracker.summaries() if self.detect else [],
            capture=AttackTraceSet(plaintexts=plaintexts, observable=observable),
            exports=exports,
        )

    def _simulate_trace(
        self,
        trace_idx: int,
        label: int,
        power: np.ndarray,
        jitter: np.ndarray,
        draws: CountermeasureDraws,
    ) -> TraceResult:
        layout = self.layout
        n_windows, n_accs = layout.n_windows, layout.n_accs
        post = np.empty_like(power)
        counts_all = np.empty((n_windows, layout.n_sensors), dtype=np.int64)
        saturated_all = np.empty((n_windows, layout.n_sensors), dtype=bool)
        acc_energy = np.zeros(n_accs)
        acc_windows = np.zeros(n_accs, dtype=np.int64)

        pos = 0
        while pos < n_windows:
            acc_on = np.array([st.is_on for st in self.states], dtype=bool)
            t0 = int(layout.window_starts[pos])
            applied = self.bank.apply(power, self.bank.state(acc_on), draws, pos)
            counts, saturated = sense_trace(applied.power, layout.attenuation, self.sensor_params, jitter[pos:])

            hit = None
            if self.detect:
                candidate = self.nicv.candidate(counts.T, label, pos)
                running = self.nicv.running_scores(candidate)
                hit = first_transition(self._acc_scores(running), self.states)

            done = n_windows - pos if hit is None else hit + 1
            steps = int(layout.window_lengths[pos:pos + done].sum())
            post[t0:t0 + steps] = applied.power[:steps]
            counts_all[pos:pos + done] = counts[:done]
            saturated_all[pos:pos + done] = saturated[:done]
            acc_energy += applied.acc_energy(steps, n_accs)
            acc_windows[acc_on] += done

            if self.detect:
                self.tracker.observe(running[:, :done], lambda s, j: self.nicv.running_peak(candidate, s, j))
            if hit is None:
                if self.detect:
                    self.nicv.commit(candidate)
                break
            self._transition(trace_idx * n_windows + pos + hit, running[:, hit])
            pos += hit + 1

        return TraceResult(
            power=post, counts=counts_all, saturated=saturated_all, acc_energy=acc_energy, acc_windows=acc_windows
        )

    def _transition(self, window_idx: int, column: np.ndarray) -> None:
        scores = [
            LeakageScore(sensor_id=s, window_idx=window_idx, value=float(v))
            for s, v in enumerate(column)
            if not np.isnan(v)
        ]
        self.states, events, _ = controller_tick(scores, self.states, self.layout.acc_map, window_idx)
        self.events.extend(events)
        self._fire("on_transition", events=events, window_idx=window_idx)
        self.nicv.reset()
        self.epoch += 1
        self._fire("on_epoch_reset", window_idx=window_idx, epoch=self.epoch)
        logger.debug(f"window {window_idx}: {[(e.acc_id, e.transition) for e in events]}, epoch {self.epoch}")


@dataclass
class CalibrationOutcome:
    n_traces: int
    windows_per_trace: int
    series: List[TvlaSeriesPoint]
    first_crossing: List[Optional[int]]
    region_means: List[float]
    sensor_scores: List[SensorScoreSummary]
    exports: TraceExports


def simulate_calibration(
    config: ExperimentConfig,
    layout: Layout,
    streams: Dict[str, np.random.Generator],
) -> CalibrationOutcome:
    """
    Fixed-vs-random TVLA over config.n_traces encryptions.

    Even trace indices encrypt the fixed plaintext, odd ones a random
    plaintext. No countermeasure is applied.
    """
    n_traces = config.n_traces
    n_sensors, n_windows = layout.n_sensors, layout.n_windows
    threshold = config.detector.tvla_threshold
    report_every = config.calibration.report_every
    params = config.sensors.params()

    bank = TvlaBank(n_sensors, n_windows)
    tracker = ScoreTracker(n_sensors, "tvla_fixed_random")
    crossing: List[Optional[int]] = [None] * n_sensors
    series: List[TvlaSeriesPoint] = []
    totals = np.zeros(layout.n_regions)
    exports = TraceExports()

    source = DutSource(config, layout, streams["plaintexts"], streams["dut_noise"], alternate_fixed=True)
    for start, _, power in source.chunks(n_traces):
        n = power.shape[0]
        jitter = streams["sensor_jitter"].standard_normal((n, n_windows, n_sensors))
        counts, saturated = sense_trace(power, layout.attenuation, params, jitter)
        totals += power.sum(axis=(0, 1))
        for k in range(n):
            i = start + k
            bank.update(counts[k].T, fixed=(i % 2 == 0))
            t_abs = np.abs(bank.t_statistics())
            max_abs = fmax_rows(t_abs)
            tracker.observe(max_abs[:, None], lambda s, _: int(argmax_rows(t_abs)[s]), weight=n_windows)
            with np.errstate(invalid="ignore"):
                crossed = np.nonzero(max_abs >= threshold)[0]
            for s in crossed:
                if crossing[s] is None:
                    crossing[s] = i + 1
            if (i + 1) % report_every == 0 or i + 1 == n_traces:
                series.append(TvlaSeriesPoint(n_traces=i + 1, max_abs_t=_optional(max_abs)))
            if i < config.harness.export_limit:
                exports.region_power.append((i, power[k]))
                exports.readings.append((i, counts[k], saturated[k]))
            last_window = (i + 1) * n_windows - 1
            exports.scores.extend((s, last_window, float(v)) for s, v in enumerate(max_abs) if not np.isnan(v))
        logger.debug(f"calibration: {start + n}/{n_traces} traces")

    return CalibrationOutcome(
        n_traces=n_traces,
        windows_per_trace=n_windows,
        series=series,
        first_crossing=crossing,
        region_means=(totals / (n_traces * layout.n_steps)).tolist(),
        sensor_scores=tracker.summaries(),
        exports=exports,
    )
