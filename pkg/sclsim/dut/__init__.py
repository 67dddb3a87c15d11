"""Device-under-test model: traced AES-128 and its power emission."""

from sclsim.dut.aes import (
    N_EVENTS,
    SBOX,
    EventSchedule,
    OpEvent,
    aes128_encrypt_traced,
    event_schedule,
    expand_key,
    trace_batch,
)
from sclsim.dut.leakage import (
    HW_TABLE,
    RegionPowerTrace,
    emit_power,
    emit_power_batch,
    hamming_weight,
    leakage_units,
)

__all__ = [
    "N_EVENTS",
    "SBOX",
    "HW_TABLE",
    "EventSchedule",
    "OpEvent",
    "RegionPowerTrace",
    "aes128_encrypt_traced",
    "emit_power",
    "emit_power_batch",
    "event_schedule",
    "expand_key",
    "hamming_weight",
    "leakage_units",
    "trace_batch",
]
