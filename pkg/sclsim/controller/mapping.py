"""
Sensor-to-ACC wiring.

An ACC protects the regions whose nearest sensor (ties to the lowest id)
feeds it. An ACC whose sensors are nearest to no region still protects the
single region closest to its lowest sensor.
"""

from typing import Dict, List, Optional, Sequence

from sclsim.exceptions import ConfigError, UnmappedSensor
from sclsim.floorplan.sensors import nearest_sensor
from sclsim.schemas import Floorplan, SensorAccMap, SensorPlacement


def build_sensor_acc_map(
    floorplan: Floorplan,
    placements: Sequence[SensorPlacement],
    explicit: Optional[Dict[int, int]] = None,
) -> SensorAccMap:
    """
    Wire sensors to ACCs and derive each ACC's region set.

    Args:
        floorplan: floorplan with the regions to protect
        placements: sensor placements
        explicit: sensor_id -> acc_id; None wires sensor i to ACC i

    Raises:
        UnmappedSensor: explicit wiring omits a placed sensor
        ConfigError: explicit wiring names unknown sensors or sparse ACC ids
    """
    sensor_ids = [p.sensor_id for p in placements]
    if explicit is None:
        sensor_to_acc = {s: s for s in sensor_ids}
    else:
        missing = [s for s in sensor_ids if s not in explicit]
        if missing:
            raise UnmappedSensor(f"sensors {missing} are not wired to any ACC")
        unknown = [s for s in explicit if s not in sensor_ids]
        if unknown:
            raise ConfigError(f"unknown sensors {unknown}", "controller.sensor_acc_map")
        acc_ids = sorted(set(explicit.values()))
        if acc_ids != list(range(len(acc_ids))):
            raise ConfigError("ACC ids must be dense starting at 0", "controller.sensor_acc_map")
        sensor_to_acc = dict(explicit)

    acc_regions: Dict[int, List[int]] = {a: [] for a in sorted(set(sensor_to_acc.values()))}
    for region in floorplan.regions:
        owner = nearest_sensor(region.x, region.y, placements)
        acc_regions[sensor_to_acc[owner]].append(region.region_id)

    by_id = {p.sensor_id: p for p in placements}
    for acc_id, regions in acc_regions.items():
        if regions:
            continue
        anchor = by_id[min(s for s, a in sensor_to_acc.items() if a == acc_id)]
        closest = min(floorplan.regions, key=lambda r: ((r.x - anchor.x) ** 2 + (r.y - anchor.y) ** 2, r.region_id))
        regions.append(closest.region_id)

    return SensorAccMap(sensor_to_acc=sensor_to_acc, acc_regions=acc_regions)
