"""
Traced AES-128 model of the device under test.

The cipher is evaluated on whole batches of plaintexts with numpy table
lookups. Besides the ciphertexts, every byte-level SubBytes, MixColumns and
AddRoundKey output is recorded together with the byte it overwrote, in a
fixed schedule of 480 operations:

1. Initial AddRoundKey (16 events)
2. Rounds 1-9: SubBytes, MixColumns, AddRoundKey (48 events each)
3. Round 10: SubBytes, AddRoundKey (32 events)

ShiftRows only rewires bytes and emits nothing. One operation occupies one
time step, so the schedule (and therefore the timing) never depends on data.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from sclsim.schemas import Floorplan

N_ROUNDS = 10
N_EVENTS = 480

SBOX = np.array([
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16
], dtype=np.uint8)

RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)

# Multiplication by x in GF(2^8).
XTIME = np.array([((b << 1) ^ (0x1B if b & 0x80 else 0)) & 0xFF for b in range(256)], dtype=np.uint8)

# State bytes are stored column-major (byte b sits at row b % 4, column b // 4).
SHIFT_ROWS = np.array([(b % 4) + 4 * (((b // 4) + (b % 4)) % 4) for b in range(16)], dtype=np.intp)


@dataclass(frozen=True, slots=True)
class OpEvent:
    """One byte-level operation of the traced cipher."""
    time_idx: int
    region_id: int
    kind: str
    value: int
    prev_value: int
    round: int = 0
    byte_index: int = 0

    def __post_init__(self):
        if not (0 <= self.value <= 255 and 0 <= self.prev_value <= 255):
            raise ValueError(f"event bytes out of range: value={self.value}, prev_value={self.prev_value}")
        if self.time_idx < 0 or self.region_id < 0:
            raise ValueError("time_idx and region_id must be non-negative")


@dataclass(frozen=True)
class EventSchedule:
    """Data-independent layout of the 480 events: when, where and what."""
    time_idx: np.ndarray
    region_id: np.ndarray
    kinds: Tuple[str, ...]
    rounds: np.ndarray
    byte_index: np.ndarray
    n_regions: int

    @property
    def n_events(self) -> int:
        return len(self.kinds)

    @property
    def n_steps(self) -> int:
        return int(self.time_idx[-1]) + 1 if self.n_events else 0


def _layout() -> List[Tuple[str, int]]:
    """(kind, round) per block of 16 events, in execution order."""
    blocks = [("addroundkey_out", 0)]
    for r in range(1, N_ROUNDS + 1):
        blocks.append(("sbox_out", r))
        if r < N_ROUNDS:
            blocks.append(("mixcolumns_out", r))
        blocks.append(("addroundkey_out", r))
    return blocks


def event_schedule(floorplan: Floorplan) -> EventSchedule:
    """Return the fixed event schedule with regions resolved through the floorplan."""
    kinds: List[str] = []
    rounds: List[int] = []
    bytes_: List[int] = []
    regions: List[int] = []
    for kind, r in _layout():
        for b in range(16):
            kinds.append(kind)
            rounds.append(r)
            bytes_.append(b)
            regions.append(floorplan.region_for(kind, b))
    return EventSchedule(
        time_idx=np.arange(len(kinds), dtype=np.intp),
        region_id=np.array(regions, dtype=np.intp),
        kinds=tuple(kinds),
        rounds=np.array(rounds, dtype=np.intp),
        byte_index=np.array(bytes_, dtype=np.intp),
        n_regions=floorplan.n_regions,
    )


def expand_key(key: bytes) -> np.ndarray:
    """AES-128 key schedule as an (11, 16) array of round keys."""
    if len(key) != 16:
        raise ValueError("AES-128 key must be 16 bytes")
    words = [list(key[4 * i:4 * i + 4]) for i in range(4)]
    for i in range(4, 44):
        temp = list(words[i - 1])
        if i % 4 == 0:
            temp = temp[1:] + temp[:1]
            temp = [int(SBOX[b]) for b in temp]
            temp[0] ^= RCON[i // 4 - 1]
        words.append([words[i - 4][j] ^ temp[j] for j in range(4)])
    return np.array(words, dtype=np.uint8).reshape(11, 16)


def _mix_columns(state: np.ndarray) -> np.ndarray:
    a = state.reshape(-1, 4, 4)
    a0, a1, a2, a3 = a[:, :, 0], a[:, :, 1], a[:, :, 2], a[:, :, 3]
    out = np.empty_like(a)
    out[:, :, 0] = XTIME[a0] ^ XTIME[a1] ^ a1 ^ a2 ^ a3
    out[:, :, 1] = a0 ^ XTIME[a1] ^ XTIME[a2] ^ a2 ^ a3
    out[:, :, 2] = a0 ^ a1 ^ XTIME[a2] ^ XTIME[a3] ^ a3
    out[:, :, 3] = XTIME[a0] ^ a0 ^ a1 ^ a2 ^ XTIME[a3]
    return out.reshape(-1, 16)


def trace_batch(plaintexts: np.ndarray, key: bytes) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Encrypt a batch and record every traced intermediate.

    Args:
        plaintexts: (n, 16) uint8 array
        key: 16-byte AES key

    Returns:
        Tuple of (ciphertexts (n, 16), values (n, 480), prev_values (n, 480)),
        all uint8, with event columns in schedule order.
    """
    pts = np.asarray(plaintexts, dtype=np.uint8)
    if pts.ndim != 2 or pts.shape[1] != 16:
        raise ValueError(f"plaintexts must have shape (n, 16), got {pts.shape}")
    round_keys = expand_key(key)
    values: List[np.ndarray] = []
    prevs: List[np.ndarray] = []

    state = pts ^ round_keys[0]
    prevs.append(pts)
    values.append(state)
    for r in range(1, N_ROUNDS + 1):
        substituted = SBOX[state]
        prevs.append(state)
        values.append(substituted)
        state = substituted[:, SHIFT_ROWS]
        if r < N_ROUNDS:
            mixed = _mix_columns(state)
            prevs.append(state)
            values.append(mixed)
            state = mixed
        keyed = state ^ round_keys[r]
        prevs.append(state)
        values.append(keyed)
        state = keyed

    return state.copy(), np.concatenate(values, axis=1), np.concatenate(prevs, axis=1)


def aes128_encrypt_traced(plaintext: bytes, key: bytes, floorplan: Floorplan) -> Tuple[bytes, List[OpEvent]]:
    """Encrypt one block and return the ciphertext with its event stream."""
    if len(plaintext) != 16:
        raise ValueError("AES-128 plaintext must be 16 bytes")
    schedule = event_schedule(floorplan)
    pts = np.frombuffer(bytes(plaintext), dtype=np.uint8).reshape(1, 16)
    ciphertexts, values, prevs = trace_batch(pts, key)
    events = [
        OpEvent(
            time_idx=int(schedule.time_idx[i]),
            region_id=int(schedule.region_id[i]),
            kind=schedule.kinds[i],
            value=int(values[0, i]),
            prev_value=int(prevs[0, i]),
            round=int(schedule.rounds[i]),
            byte_index=int(schedule.byte_index[i]),
        )
        for i in range(schedule.n_events)
    ]
    return ciphertexts[0].tobytes(), events
