"""
Ring-oscillator sensor model.

A sensor sees the power of every region attenuated by distance, averages it
over a sampling window and counts oscillations of a ring oscillator whose
frequency drops linearly with local power (supply droop).
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from sclsim.schemas import Floorplan, SensorParams, SensorPlacement

KERNELS = ("inverse_square", "inverse_linear")


@dataclass(frozen=True, slots=True)
class SensorReading:
    sensor_id: int
    window_idx: int
    count: int
    saturated: bool = False

    def __post_init__(self):
        if self.count < 0:
            raise ValueError(f"sensor count must be non-negative, got {self.count}")


def kernel_weight(distance: float, kernel: str = "inverse_square") -> float:
    if kernel == "inverse_linear":
        return 1.0 / (1.0 + distance)
    return 1.0 / (1.0 + distance * distance)


def attenuation_matrix(
    floorplan: Floorplan,
    placements: Sequence[SensorPlacement],
    kernel: str = "inverse_square",
) -> np.ndarray:
    """(n_regions, n_sensors) matrix of kernel weights w(d(region, sensor))."""
    rx = np.array([r.x for r in floorplan.regions], dtype=np.float64)
    ry = np.array([r.y for r in floorplan.regions], dtype=np.float64)
    sx = np.array([p.x for p in placements], dtype=np.float64)
    sy = np.array([p.y for p in placements], dtype=np.float64)
    d2 = (rx[:, None] - sx[None, :]) ** 2 + (ry[:, None] - sy[None, :]) ** 2
    if kernel == "inverse_linear":
        return 1.0 / (1.0 + np.sqrt(d2))
    return 1.0 / (1.0 + d2)


def local_power(
    region_powers: Sequence[float],
    placement: SensorPlacement,
    floorplan: Floorplan,
    kernel: str = "inverse_square",
) -> float:
    """Distance-weighted sum of region powers seen by one sensor at one time step."""
    if len(region_powers) != floorplan.n_regions:
        raise ValueError(f"expected {floorplan.n_regions} region powers, got {len(region_powers)}")
    total = 0.0
    for region, power in zip(floorplan.regions, region_powers):
        d = math.hypot(region.x - placement.x, region.y - placement.y)
        total += power * kernel_weight(d, kernel)
    return total


def nearest_sensor(x: int, y: int, placements: Sequence[SensorPlacement]) -> int:
    """Sensor closest to a cell; ties go to the lowest sensor id."""
    best: Optional[Tuple[int, int]] = None
    for p in sorted(placements, key=lambda p: p.sensor_id):
        d2 = (p.x - x) ** 2 + (p.y - y) ** 2
        if best is None or d2 < best[0]:
            best = (d2, p.sensor_id)
    return best[1]


def window_bounds(n_steps: int, window: int) -> Tuple[np.ndarray, np.ndarray]:
    """Start step and length of each window; the last window may be short."""
    starts = np.arange(0, n_steps, window, dtype=np.intp)
    lengths = np.minimum(window, n_steps - starts)
    return starts, lengths


def window_means(local: np.ndarray, window: int) -> np.ndarray:
    """
    Average per-step local power over sampling windows.

    Args:
        local: (..., n_steps, n_sensors) local power
        window: steps per window

    Returns:
        (..., n_windows, n_sensors) window means
    """
    if window == 1:
        return local
    n_steps = local.shape[-2]
    starts, lengths = window_bounds(n_steps, window)
    sums = np.add.reduceat(local, starts, axis=-2)
    return sums / lengths[:, None]


def ro_counts(
    p_mean: np.ndarray,
    lengths: np.ndarray,
    params: SensorParams,
    jitter: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized RO counting.

    Args:
        p_mean: (..., n_windows, n_sensors) window-mean local power
        lengths: (n_windows,) steps per window
        params: sensor parameters
        jitter: standard normal draws shaped like p_mean

    Returns:
        Tuple of (counts as int64, saturated flags)
    """
    load = params.gamma * p_mean
    base = np.maximum(params.f0 * lengths[:, None] * (1.0 - load), 0.0)
    counts = np.rint(base + params.sigma_jitter * jitter)
    np.maximum(counts, 0.0, out=counts)
    return counts.astype(np.int64), load >= 1.0


def ro_count(
    local_power_sum: float,
    params: SensorParams,
    rng: np.random.Generator,
    *,
    sensor_id: int = 0,
    window_idx: int = 0,
    steps: Optional[int] = None,
) -> SensorReading:
    """
    Count oscillations of one sensor over one window.

    Args:
        local_power_sum: window-mean local power P_mean
        params: sensor parameters
        rng: generator for the count-domain jitter (always drawn)
        sensor_id: sensor producing the reading
        window_idx: global window index
        steps: actual window length when shorter than params.window

    Returns:
        SensorReading with count = round(max(0, f0 * L * (1 - gamma * P)) + jitter), clamped at 0
    """
    length = params.window if steps is None else steps
    z = rng.standard_normal()
    counts, saturated = ro_counts(
        np.array([[local_power_sum]], dtype=np.float64),
        np.array([length]),
        params,
        np.array([[z]]),
    )
    return SensorReading(
        sensor_id=sensor_id,
        window_idx=window_idx,
        count=int(counts[0, 0]),
        saturated=bool(saturated[0, 0]),
    )


def sense_trace(
    region_power: np.ndarray,
    attenuation: np.ndarray,
    params: SensorParams,
    jitter: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Counts for whole traces: region_power (..., n_steps, n_regions) -> (..., n_windows, n_sensors)."""
    local = region_power @ attenuation
    _, lengths = window_bounds(region_power.shape[-2], params.window)
    return ro_counts(window_means(local, params.window), lengths, params, jitter)


def readings_from_counts(counts: np.ndarray, saturated: np.ndarray, first_window: int = 0) -> List[SensorReading]:
    """Expand a (n_windows, n_sensors) count block into SensorReading records."""
    return [
        SensorReading(sensor_id=s, window_idx=first_window + w, count=int(counts[w, s]), saturated=bool(saturated[w, s]))
        for w in range(counts.shape[0])
        for s in range(counts.shape[1])
    ]
