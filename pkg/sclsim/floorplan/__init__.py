"""Floorplan grid, sensor placement and ring-oscillator sensing."""

from sclsim.floorplan.grid import build_floorplan, build_op_map, floorplan_from_config, place_sensors_even
from sclsim.floorplan.sensors import (
    KERNELS,
    SensorReading,
    attenuation_matrix,
    kernel_weight,
    local_power,
    nearest_sensor,
    readings_from_counts,
    ro_count,
    ro_counts,
    sense_trace,
    window_bounds,
    window_means,
)

__all__ = [
    "KERNELS",
    "SensorReading",
    "attenuation_matrix",
    "build_floorplan",
    "build_op_map",
    "floorplan_from_config",
    "kernel_weight",
    "local_power",
    "nearest_sensor",
    "place_sensors_even",
    "readings_from_counts",
    "ro_count",
    "ro_counts",
    "sense_trace",
    "window_bounds",
    "window_means",
]
