"""
Adaptive countermeasure cells (ACCs).

Three hiding transforms act on a region's power while the region's ACC is on:

1. noise_injector adds N(0, sigma_cm) per step; cost is the absolute added power.
2. equalizer pulls each value toward a target, (1 - s) * v + s * target;
   cost is the power it had to add.
3. random_delay replays the region's activity from up to max_shift windows
   earlier (circular over the trace); free.

CountermeasureBank applies the transforms to whole trace segments from
pre-drawn randomness. The draws are made for every trace whether or not any
ACC is on, so arming the cells never shifts another random stream.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from sclsim.floorplan.sensors import window_bounds
from sclsim.schemas import CountermeasureConfig, CountermeasureKind, OverheadReport, SensorAccMap

logger = logging.getLogger(__name__)


def _equalize(v: np.ndarray, strength: float, target) -> Tuple[np.ndarray, np.ndarray]:
    out = (1.0 - strength) * v + strength * target
    return out, np.maximum(out - v, 0.0)


def apply_cm(
    region_series: Sequence[float],
    kind: CountermeasureKind,
    rng: np.random.Generator,
    window: int = 1,
) -> Tuple[np.ndarray, float]:
    """
    Transform one region's power series.

    Args:
        region_series: power values of the region, one per time step
        kind: the armed countermeasure
        rng: generator for the transform's randomness
        window: steps per window; random_delay rotates by whole windows

    Returns:
        Tuple of (modified series, extra energy)
    """
    v = np.asarray(region_series, dtype=np.float64)
    if kind.kind == "noise_injector":
        added = kind.sigma_cm * rng.standard_normal(v.shape)
        return v + added, float(np.abs(added).sum())
    if kind.kind == "equalizer":
        out, cost = _equalize(v, kind.strength, kind.target)
        return out, float(cost.sum())
    shift = int(rng.integers(0, kind.max_shift + 1)) * window
    return (np.roll(v, shift % len(v)) if len(v) else v.copy()), 0.0


def overhead_accumulate(report: OverheadReport, extra_energy: float, acc_id: int, windows: int = 1) -> OverheadReport:
    """Add an ACC's energy and active windows to the report."""
    active = list(report.windows_active)
    if len(active) <= acc_id:
        active.extend([0] * (acc_id + 1 - len(active)))
    active[acc_id] += windows
    return OverheadReport(
        extra_energy=report.extra_energy + max(float(extra_energy), 0.0),
        windows_active=active,
        total_windows=report.total_windows,
    )


@dataclass
class CountermeasureDraws:
    """Randomness for one trace: standard normals per (step, region) and uniforms per (window, region)."""
    noise: Optional[np.ndarray] = None
    delay: Optional[np.ndarray] = None


@dataclass
class CountermeasureState:
    """Armed cell per ACC and the region flags implied by which ACCs are on."""
    armed: List[Optional[CountermeasureKind]]
    acc_on: np.ndarray
    region_owner: np.ndarray

    @property
    def region_active(self) -> np.ndarray:
        return self.region_owner >= 0


@dataclass
class CmApplication:
    """Result of transforming a trace segment."""
    power: np.ndarray
    energy: Optional[np.ndarray]
    owner: np.ndarray

    def acc_energy(self, n_steps: int, n_accs: int) -> np.ndarray:
        """Energy per ACC over the first n_steps steps of the segment."""
        if self.energy is None:
            return np.zeros(n_accs)
        active = self.owner >= 0
        per_region = self.energy[:n_steps].sum(axis=0)
        return np.bincount(self.owner[active], weights=per_region[active], minlength=n_accs)


class CountermeasureBank:
    """All ACCs of a floorplan, applied to region power segments."""

    def __init__(
        self,
        armed: List[Optional[CountermeasureKind]],
        acc_map: SensorAccMap,
        n_regions: int,
        n_steps: int,
        window: int,
        region_targets: Optional[np.ndarray] = None,
    ):
        self.armed = armed
        self.n_accs = len(armed)
        self.n_regions = n_regions
        self.n_steps = n_steps
        self.cover = np.zeros((self.n_accs, n_regions), dtype=bool)
        for acc_id, regions in acc_map.acc_regions.items():
            self.cover[acc_id, regions] = True
        self.targets = region_targets
        self.window = window
        self.starts, self.lengths = window_bounds(n_steps, window)
        self.step_window = np.repeat(np.arange(len(self.starts)), self.lengths)
        kinds = {cell.kind for cell in armed if cell is not None}
        self.uses_noise = "noise_injector" in kinds
        self.uses_delay = "random_delay" in kinds

    @classmethod
    def from_config(
        cls,
        config: CountermeasureConfig,
        acc_map: SensorAccMap,
        n_regions: int,
        n_steps: int,
        window: int,
        region_means: Optional[np.ndarray] = None,
    ) -> "CountermeasureBank":
        overrides = config.overrides()
        armed: List[Optional[CountermeasureKind]] = []
        for acc_id in range(acc_map.n_accs):
            name = overrides.get(acc_id, config.kind)
            if name == "none":
                armed.append(None)
                continue
            armed.append(CountermeasureKind(
                kind=name,
                sigma_cm=config.sigma_cm,
                strength=config.strength,
                target=config.target if config.target is not None else 0.0,
                max_shift=config.max_shift,
            ))
        if config.target is not None:
            targets = np.full(n_regions, config.target)
        elif region_means is not None:
            targets = np.asarray(region_means, dtype=np.float64)
        else:
            targets = np.zeros(n_regions)
        return cls(armed, acc_map, n_regions, n_steps, window, targets)

    @property
    def is_armed(self) -> bool:
        return any(cell is not None for cell in self.armed)

    @property
    def needs_targets(self) -> bool:
        return any(cell is not None and cell.kind == "equalizer" for cell in self.armed)

    def draw(self, rng: np.random.Generator) -> CountermeasureDraws:
        """Draw one trace worth of randomness (same shapes every trace)."""
        noise = rng.standard_normal((self.n_steps, self.n_regions)) if self.uses_noise else None
        delay = rng.random((len(self.starts), self.n_regions)) if self.uses_delay else None
        return CountermeasureDraws(noise=noise, delay=delay)

    def state(self, acc_on: Sequence[bool]) -> CountermeasureState:
        """Each region is handled by the lowest-id ACC that is on and covers it (-1 = none)."""
        acc_on = np.asarray(acc_on, dtype=bool)
        covered = self.cover & acc_on[:, None]
        owner = np.where(covered.any(axis=0), np.argmax(covered, axis=0), -1)
        for r in np.nonzero(owner >= 0)[0]:
            if self.armed[owner[r]] is None:
                owner[r] = -1
        return CountermeasureState(armed=self.armed, acc_on=acc_on, region_owner=owner)

    def apply(
        self,
        power: np.ndarray,
        state: CountermeasureState,
        draws: CountermeasureDraws,
        first_window: int = 0,
    ) -> CmApplication:
        """
        Transform the segment of a trace that starts at window first_window.

        Args:
            power: (n_steps, n_regions) region power of the whole trace
            state: which cell handles each region
            draws: the trace's pre-drawn randomness
            first_window: window position the segment starts at

        Returns:
            CmApplication with the transformed power and per-step energy,
            both covering the steps from the segment start to the trace end
        """
        t0 = int(self.starts[first_window])
        segment = power if t0 == 0 else power[t0:]
        owner = state.region_owner
        active = state.region_active
        if not active.any():
            return CmApplication(power=segment, energy=None, owner=owner)
        out = segment.copy()
        energy = np.zeros_like(segment)
        for r in np.nonzero(active)[0]:
            cell = self.armed[owner[r]]
            v = segment[:, r]
            if cell.kind == "noise_injector":
                added = cell.sigma_cm * draws.noise[t0:, r]
                out[:, r] = v + added
                energy[:, r] = np.abs(added)
            elif cell.kind == "equalizer":
                out[:, r], energy[:, r] = _equalize(v, cell.strength, self.targets[r])
            else:
                out[:, r] = power[self._delay_index(draws.delay[:, r], cell.max_shift, t0), r]
        return CmApplication(power=out, energy=energy, owner=owner)

    def _delay_index(self, uniforms: np.ndarray, max_shift: int, t0: int) -> np.ndarray:
        """Source step for every step from t0 on: s windows back, s drawn per window, wrapping at the trace start."""
        shifts = np.floor(uniforms * (max_shift + 1)).astype(np.intp)
        steps = np.arange(t0, self.n_steps)
        return (steps - shifts[self.step_window[t0:]] * self.window) % self.n_steps


def armed_summary(bank: CountermeasureBank) -> Dict[int, str]:
    return {acc_id: (cell.kind if cell is not None else "none") for acc_id, cell in enumerate(bank.armed)}
