"""
Floorplan construction and even sensor placement.
"""

import math
from typing import List, Optional, Sequence, Tuple

from sclsim.exceptions import GridTooSmall, NotPerfectSquare
from sclsim.schemas import EMITTED_KINDS, Floorplan, FloorplanConfig, FloorplanRegion, SensorPlacement


def build_op_map(strategy: str, n_regions: int) -> dict:
    """
    Map every emitted (kind, byte) pair onto a region.

    Args:
        strategy: 'byte' (byte b -> region b mod n), 'column' (byte b -> region
            (b // 4) mod n) or 'region:<r>' (everything in region r)
        n_regions: number of regions in the floorplan

    Returns:
        Dict keyed '<kind>:<byte_index>'
    """
    if strategy.startswith("region:"):
        target = int(strategy.split(":", 1)[1])
        return {f"{kind}:{b}": target for kind in EMITTED_KINDS for b in range(16)}
    if strategy == "column":
        return {f"{kind}:{b}": (b // 4) % n_regions for kind in EMITTED_KINDS for b in range(16)}
    if strategy == "byte":
        return {f"{kind}:{b}": b % n_regions for kind in EMITTED_KINDS for b in range(16)}
    raise ValueError(f"unknown op_map strategy '{strategy}'")


def build_floorplan(
    width: int,
    height: int,
    cells: Optional[Sequence[Tuple[int, int]]] = None,
    op_map: str = "byte",
) -> Floorplan:
    """Build a floorplan; without explicit cells every grid cell becomes a region (id = y * width + x)."""
    if cells is None:
        cells = [(x, y) for y in range(height) for x in range(width)]
    regions = [FloorplanRegion(region_id=i, x=x, y=y) for i, (x, y) in enumerate(cells)]
    return Floorplan(width=width, height=height, regions=regions, op_map=build_op_map(op_map, len(regions)))


def floorplan_from_config(config: FloorplanConfig) -> Floorplan:
    return build_floorplan(config.width, config.height, config.region_cells(), config.op_map)


def place_sensors_even(width: int, height: int, n_sensors: int) -> List[SensorPlacement]:
    """
    Place k*k sensors at the centers of a uniform k x k partition of the grid.

    Coordinates follow floor((2i + 1) * dim / (2k)); ids run row-major.

    Raises:
        NotPerfectSquare: n_sensors is not a positive perfect square
        GridTooSmall: k exceeds the grid width or height
    """
    k = math.isqrt(n_sensors) if n_sensors > 0 else 0
    if k == 0 or k * k != n_sensors:
        raise NotPerfectSquare(f"n_sensors={n_sensors} is not a positive perfect square")
    if k > min(width, height):
        raise GridTooSmall(f"a {k}x{k} sensor lattice does not fit a {width}x{height} grid")
    xs = [((2 * i + 1) * width) // (2 * k) for i in range(k)]
    ys = [((2 * j + 1) * height) // (2 * k) for j in range(k)]
    return [
        SensorPlacement(sensor_id=j * k + i, x=xs[i], y=ys[j])
        for j in range(k)
        for i in range(k)
    ]
