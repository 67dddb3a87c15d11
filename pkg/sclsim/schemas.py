"""
Centralized Pydantic schemas for sclsim.

This module is the single source of truth for every serializable data model:
model parameters (leakage, sensors, floorplan), the layered experiment
configuration, controller/countermeasure records and the run report.
Hot-path records that are created per window or per trace (OpEvent,
SensorReading, LeakageScore, accumulators) are plain dataclasses living next
to the code that produces them.
"""

import math
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Operation kinds an event may carry; only the first three are emitted by the AES model.
OP_KINDS = ("sbox_out", "addroundkey_out", "mixcolumns_out", "load", "store")
EMITTED_KINDS = ("sbox_out", "addroundkey_out", "mixcolumns_out")

LeakageMode = Literal["hamming_weight", "hamming_distance"]
DetectorName = Literal["tvla_fixed_random", "nicv"]
CountermeasureName = Literal["noise_injector", "equalizer", "random_delay"]
Transition = Literal["activated", "deactivated"]
Regime = Literal["off", "forced", "adaptive"]
RunMode = Literal["calibrate", "run", "attack", "sweep"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _parse_pairs(text: str, what: str) -> List[Tuple[str, str]]:
    """Split ``a:b,c:d`` into string pairs, raising ValueError on bad syntax."""
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        left, sep, right = item.partition(":")
        if not sep or not left.strip() or not right.strip():
            raise ValueError(f"{what} entry '{item}' is not of the form a:b")
        pairs.append((left.strip(), right.strip()))
    return pairs


def _parse_int_pairs(text: str, what: str) -> List[Tuple[int, int]]:
    pairs = _parse_pairs(text, what)
    try:
        return [(int(a), int(b)) for a, b in pairs]
    except ValueError:
        raise ValueError(f"{what} entries must be integer pairs") from None


# ============================================================================
# MODEL PARAMETERS
# ============================================================================

class LeakageModelParams(_Strict):
    """Parametric power model of one DUT operation."""
    alpha: float = Field(1.0, ge=0, allow_inf_nan=False, description="Power units per set bit (data-dependent leakage)")
    beta: float = Field(1.0, allow_inf_nan=False, description="Static power per event")
    sigma_noise: float = Field(1.0, ge=0, allow_inf_nan=False, description="Std-dev of additive Gaussian noise per cell")
    mode: LeakageMode = Field("hamming_weight", description="hamming_weight on value, or hamming_distance on value XOR prev_value")


class SensorParams(_Strict):
    """Ring-oscillator sensor model."""
    f0: float = Field(1000.0, gt=0, allow_inf_nan=False, description="Free-running oscillations per time step")
    gamma: float = Field(0.01, ge=0, allow_inf_nan=False, description="Power-to-frequency sensitivity")
    window: int = Field(1, ge=1, description="Time steps per sampling window")
    sigma_jitter: float = Field(0.0, ge=0, allow_inf_nan=False, description="Count-domain noise std-dev")


class FloorplanRegion(_Strict):
    region_id: int = Field(ge=0)
    x: int = Field(ge=0)
    y: int = Field(ge=0)


class SensorPlacement(_Strict):
    sensor_id: int = Field(ge=0)
    x: int = Field(ge=0)
    y: int = Field(ge=0)


class Floorplan(_Strict):
    """2-D grid of regions plus the mapping of DUT operations onto regions."""
    width: int = Field(ge=1, description="Grid cells along x")
    height: int = Field(ge=1, description="Grid cells along y")
    regions: List[FloorplanRegion] = Field(description="Regions with their cell coordinates, ids dense [0, n)")
    op_map: Dict[str, int] = Field(description="'<kind>:<byte_index>' -> region_id")

    @model_validator(mode="after")
    def _check(self) -> "Floorplan":
        if not self.regions:
            raise ValueError("floorplan needs at least one region")
        ids = [r.region_id for r in self.regions]
        if ids != list(range(len(ids))):
            raise ValueError("region ids must be dense and ordered [0, n)")
        for r in self.regions:
            if r.x >= self.width or r.y >= self.height:
                raise ValueError(f"region {r.region_id} at ({r.x},{r.y}) lies outside the {self.width}x{self.height} grid")
        for kind in EMITTED_KINDS:
            for b in range(16):
                key = f"{kind}:{b}"
                if key not in self.op_map:
                    raise ValueError(f"op_map has no region for {key}")
        for key, region_id in self.op_map.items():
            if not 0 <= region_id < len(self.regions):
                raise ValueError(f"op_map entry {key} points at unknown region {region_id}")
        return self

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    def region_for(self, kind: str, byte_index: int) -> int:
        return self.op_map[f"{kind}:{byte_index}"]


class SensorAccMap(_Strict):
    """Which ACC each sensor drives and which regions each ACC protects."""
    sensor_to_acc: Dict[int, int] = Field(description="sensor_id -> acc_id")
    acc_regions: Dict[int, List[int]] = Field(description="acc_id -> protected region ids")

    @model_validator(mode="after")
    def _check(self) -> "SensorAccMap":
        acc_ids = sorted(set(self.sensor_to_acc.values()))
        if acc_ids != list(range(len(acc_ids))):
            raise ValueError("acc ids must be dense [0, n)")
        if sorted(self.acc_regions) != acc_ids:
            raise ValueError("every ACC fed by a sensor needs a region set, and only those")
        for acc_id, regions in self.acc_regions.items():
            if not regions:
                raise ValueError(f"ACC {acc_id} protects no region")
        return self

    @property
    def n_accs(self) -> int:
        return len(self.acc_regions)

    def sensors_of(self, acc_id: int) -> List[int]:
        return sorted(s for s, a in self.sensor_to_acc.items() if a == acc_id)


class CountermeasureKind(_Strict):
    """One armed countermeasure cell and its parameters."""
    kind: CountermeasureName
    sigma_cm: float = Field(0.0, ge=0, allow_inf_nan=False, description="noise_injector std-dev (power units)")
    strength: float = Field(1.0, ge=0, le=1, allow_inf_nan=False, description="equalizer pull toward target")
    target: float = Field(0.0, allow_inf_nan=False, description="equalizer target power")
    max_shift: int = Field(0, ge=0, description="random_delay maximum delay (windows)")

    @classmethod
    def noise_injector(cls, sigma_cm: float) -> "CountermeasureKind":
        return cls(kind="noise_injector", sigma_cm=sigma_cm)

    @classmethod
    def equalizer(cls, strength: float, target: float) -> "CountermeasureKind":
        return cls(kind="equalizer", strength=strength, target=target)

    @classmethod
    def random_delay(cls, max_shift: int) -> "CountermeasureKind":
        return cls(kind="random_delay", max_shift=max_shift)


class ControllerEvent(_Strict):
    window_idx: int = Field(ge=0, description="Global window index (trace * windows_per_trace + position)")
    sensor_id: int = Field(ge=0, description="Highest-scoring sensor feeding the ACC")
    acc_id: int = Field(ge=0)
    transition: Transition
    score: float = Field(description="Score that caused the transition")


class OverheadReport(_Strict):
    extra_energy: float = Field(0.0, ge=0, description="Power units x steps added by countermeasures")
    windows_active: List[int] = Field(default_factory=list, description="Windows each ACC was on, indexed by acc_id")
    total_windows: int = Field(0, ge=0, description="Windows simulated")

    @model_validator(mode="after")
    def _check(self) -> "OverheadReport":
        for count in self.windows_active:
            if count < 0 or (self.total_windows and count > self.total_windows):
                raise ValueError(f"windows_active entry {count} outside [0, {self.total_windows}]")
        return self

    @property
    def activations_duty(self) -> float:
        if not self.total_windows or not self.windows_active:
            return 0.0
        return sum(self.windows_active) / (self.total_windows * len(self.windows_active))


class KeyRankResult(_Strict):
    byte_index: int = Field(ge=0, le=15)
    ranked_guesses: List[int] = Field(description="Key guesses by descending max |correlation|, ties by key value")
    rank_of_true_key: int = Field(ge=0, le=255)
    scores: List[float] = Field(default_factory=list, description="Max |correlation| per key guess, indexed by guess")

    @field_validator("ranked_guesses")
    @classmethod
    def _permutation(cls, v: List[int]) -> List[int]:
        if sorted(v) != list(range(256)):
            raise ValueError("ranked_guesses must be a permutation of 0..255")
        return v


# ============================================================================
# EXPERIMENT CONFIGURATION
# ============================================================================

class FloorplanConfig(_Strict):
    width: int = Field(4, ge=1)
    height: int = Field(4, ge=1)
    regions: str = Field("", description="'' = one region per cell, else 'x:y' pairs separated by commas")
    op_map: str = Field("byte", description="byte | column | region:<r>")

    @field_validator("regions")
    @classmethod
    def _regions(cls, v: str) -> str:
        _parse_int_pairs(v, "regions")
        return v

    @field_validator("op_map")
    @classmethod
    def _op_map(cls, v: str) -> str:
        v = v.strip()
        if v in ("byte", "column"):
            return v
        prefix, _, rest = v.partition(":")
        if prefix == "region" and rest.strip().isdigit():
            return f"region:{int(rest)}"
        raise ValueError("op_map must be 'byte', 'column' or 'region:<r>'")

    def region_cells(self) -> List[Tuple[int, int]]:
        if not self.regions.strip():
            return [(x, y) for y in range(self.height) for x in range(self.width)]
        return _parse_int_pairs(self.regions, "regions")


class SensorsConfig(_Strict):
    n_sensors: int = Field(4, ge=1)
    f0: float = Field(1000.0, gt=0, allow_inf_nan=False)
    gamma: float = Field(0.01, ge=0, allow_inf_nan=False)
    window: int = Field(1, ge=1)
    sigma_jitter: float = Field(0.0, ge=0, allow_inf_nan=False)
    kernel: Literal["inverse_square", "inverse_linear"] = "inverse_square"

    def params(self) -> SensorParams:
        return SensorParams(f0=self.f0, gamma=self.gamma, window=self.window, sigma_jitter=self.sigma_jitter)


class DetectorConfig(_Strict):
    kind: DetectorName = "nicv"
    byte_index: int = Field(0, ge=0, le=15, description="Plaintext byte conditioning NICV")
    score_scale: float = Field(10.0, gt=0, allow_inf_nan=False)
    min_samples: int = Field(2048, ge=2, description="Samples a window position needs before it is scored")
    tvla_threshold: float = Field(4.5, gt=0, allow_inf_nan=False)


class ControllerConfig(_Strict):
    th_low: float = Field(2.0, ge=0, allow_inf_nan=False)
    th_high: float = Field(4.5, ge=0, allow_inf_nan=False)
    sensor_acc_map: str = Field("nearest", description="'nearest' or 's:a' pairs")

    @field_validator("sensor_acc_map")
    @classmethod
    def _map(cls, v: str) -> str:
        v = v.strip()
        if v != "nearest":
            _parse_int_pairs(v, "sensor_acc_map")
        return v

    @model_validator(mode="after")
    def _thresholds(self) -> "ControllerConfig":
        if self.th_low >= self.th_high:
            raise ValueError(f"th_low ({self.th_low}) must be below th_high ({self.th_high})")
        return self

    def explicit_map(self) -> Optional[Dict[int, int]]:
        if self.sensor_acc_map == "nearest":
            return None
        return dict(_parse_int_pairs(self.sensor_acc_map, "sensor_acc_map"))


class CountermeasureConfig(_Strict):
    kind: Literal["noise_injector", "equalizer", "random_delay", "none"] = "noise_injector"
    sigma_cm: float = Field(16.0, ge=0, allow_inf_nan=False)
    strength: float = Field(1.0, ge=0, le=1, allow_inf_nan=False)
    target: Optional[float] = Field(None, allow_inf_nan=False, description="Equalizer target; unset = calibration mean per region")
    max_shift: int = Field(0, ge=0, description="random_delay maximum delay in windows; must be >= 1 when armed")
    per_acc: str = Field("", description="'acc:kind' overrides separated by commas")
    calibration_traces: int = Field(256, ge=1)

    @field_validator("target", mode="before")
    @classmethod
    def _blank_target(cls, v):
        if isinstance(v, str) and not v.strip():
            return None
        return v

    @field_validator("per_acc")
    @classmethod
    def _per_acc(cls, v: str) -> str:
        for acc, kind in _parse_pairs(v, "per_acc"):
            if not acc.isdigit():
                raise ValueError(f"per_acc acc id '{acc}' is not an integer")
            if kind not in ("noise_injector", "equalizer", "random_delay", "none"):
                raise ValueError(f"per_acc kind '{kind}' is unknown")
        return v

    @model_validator(mode="after")
    def _delay_needs_shift(self) -> "CountermeasureConfig":
        kinds = {self.kind, *self.overrides().values()}
        if "random_delay" in kinds and self.max_shift < 1:
            raise ValueError("random_delay needs max_shift >= 1 window")
        return self

    def overrides(self) -> Dict[int, str]:
        return {int(acc): kind for acc, kind in _parse_pairs(self.per_acc, "per_acc")}


class AttackConfig(_Strict):
    sigma_attacker: float = Field(0.0, ge=0, allow_inf_nan=False)
    byte_index: int = Field(0, ge=0, le=15)
    step: int = Field(16, ge=1)
    max_traces: int = Field(2000, ge=1)


class CalibrationConfig(_Strict):
    report_every: int = Field(100, ge=1)


class SweepConfig(_Strict):
    th_high: List[float] = Field(default_factory=lambda: [4.5, 6.0, 8.0])
    th_low: List[float] = Field(default_factory=lambda: [1.0, 1.5, 2.0])
    replicates: int = Field(1, ge=1)
    workers: int = Field(4, ge=1)

    @field_validator("th_high", "th_low", mode="before")
    @classmethod
    def _split(cls, v):
        if isinstance(v, str):
            return [item.strip() for item in v.split(",") if item.strip()]
        return v

    @model_validator(mode="after")
    def _grid(self) -> "SweepConfig":
        if not self.th_high or not self.th_low:
            raise ValueError("sweep grids must not be empty")
        for value in self.th_high + self.th_low:
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"sweep threshold {value} must be finite and >= 0")
        if max(self.th_low) >= min(self.th_high):
            raise ValueError("every sweep th_low must lie below every sweep th_high")
        return self


class HarnessConfig(_Strict):
    chunk_size: int = Field(256, ge=1, description="Traces per emission batch")
    export_limit: int = Field(16, ge=0, description="Traces written to the per-trace CSV files")


def _hex16(v: str, name: str) -> str:
    v = v.strip().lower()
    try:
        raw = bytes.fromhex(v)
    except ValueError as e:
        raise ValueError(f"{name} is not hexadecimal") from e
    if len(raw) != 16:
        raise ValueError(f"{name} must be 16 bytes (32 hex digits)")
    return v


class ExperimentConfig(_Strict):
    """Complete, validated experiment description."""
    mode: RunMode = "run"
    seed: int = Field(1, ge=0, lt=2**64)
    n_traces: int = Field(2000, ge=1)
    key: str = Field("2b7e151628aed2a6abf7158809cf4f3c", description="AES-128 key, hex")
    fixed_plaintext: str = Field("da39a3ee5e6b4b0d3255bfef95601890", description="TVLA fixed-class plaintext, hex")
    floorplan: FloorplanConfig = Field(default_factory=FloorplanConfig)
    sensors: SensorsConfig = Field(default_factory=SensorsConfig)
    leakage: LeakageModelParams = Field(default_factory=LeakageModelParams)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    countermeasure: CountermeasureConfig = Field(default_factory=CountermeasureConfig)
    attack: AttackConfig = Field(default_factory=AttackConfig)
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    harness: HarnessConfig = Field(default_factory=HarnessConfig)

    @field_validator("key")
    @classmethod
    def _key(cls, v: str) -> str:
        return _hex16(v, "key")

    @field_validator("fixed_plaintext")
    @classmethod
    def _fixed(cls, v: str) -> str:
        return _hex16(v, "fixed_plaintext")

    @model_validator(mode="before")
    @classmethod
    def _detector_default(cls, data):
        # calibrate mode defaults to the fixed-vs-random detector
        if isinstance(data, dict) and data.get("mode") == "calibrate":
            detector = data.get("detector")
            if detector is None:
                data = {**data, "detector": {"kind": "tvla_fixed_random"}}
            elif isinstance(detector, dict) and "kind" not in detector:
                data = {**data, "detector": {**detector, "kind": "tvla_fixed_random"}}
        return data

    @property
    def key_bytes(self) -> bytes:
        return bytes.fromhex(self.key)

    @property
    def fixed_plaintext_bytes(self) -> bytes:
        return bytes.fromhex(self.fixed_plaintext)


# ============================================================================
# RUN REPORT
# ============================================================================

class SensorScoreSummary(BaseModel):
    sensor_id: int
    detector: DetectorName
    max_score: Optional[float] = Field(None, description="Largest score seen over the run (None if never scored)")
    final_score: Optional[float] = Field(None, description="Score at the last window of the run")
    peak_window: Optional[int] = Field(None, description="Window position within the trace where the max was seen")
    scored_windows: int = Field(0, description="Windows at which the sensor produced a score")


class TvlaSeriesPoint(BaseModel):
    n_traces: int
    max_abs_t: List[Optional[float]] = Field(description="Per-sensor max |t| over window positions")


class CalibrationResult(BaseModel):
    series: List[TvlaSeriesPoint] = Field(default_factory=list)
    first_crossing: List[Optional[int]] = Field(default_factory=list, description="Per sensor, trace count where max |t| first met the threshold")
    region_means: List[float] = Field(default_factory=list, description="Mean power per region (equalizer targets)")


class RegimeResult(BaseModel):
    regime: Regime
    mtd: Optional[int] = Field(None, description="Median measurements-to-disclosure; None = not disclosed")
    mtd_replicates: List[Optional[int]] = Field(default_factory=list)
    final_rank: Optional[int] = Field(None, description="Rank of the true key byte at the last checkpoint (first replicate)")
    extra_energy: float = 0.0
    activations: float = 0.0


class AttackResult(BaseModel):
    byte_index: int
    true_key_byte: int
    step: int
    max_traces: int
    regimes: List[RegimeResult] = Field(default_factory=list)


class FrontierRow(BaseModel):
    th_high: float
    th_low: float
    mtd: Optional[int] = None
    extra_energy: float = 0.0
    activations: float = 0.0


class RunReport(BaseModel):
    """Deterministic outcome of one command; wall-clock is kept out of the JSON."""
    mode: RunMode
    seed: int
    config: ExperimentConfig
    n_traces: int = 0
    windows_per_trace: int = 0
    total_windows: int = 0
    sensor_scores: List[SensorScoreSummary] = Field(default_factory=list)
    events: List[ControllerEvent] = Field(default_factory=list)
    overhead: OverheadReport = Field(default_factory=OverheadReport)
    calibration: Optional[CalibrationResult] = None
    attack: Optional[AttackResult] = None
    frontier: List[FrontierRow] = Field(default_factory=list)
    hook_violations: int = 0
    wall_clock_seconds: Optional[float] = Field(None, exclude=True)
