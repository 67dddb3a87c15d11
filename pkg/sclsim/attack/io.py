"""
Attack trace CSV export and import.

Format: header ``trace_id,plaintext,time_idx,power`` then one row per
(trace, time step); plaintexts are 32 hex digits and powers are printed
with 17 significant digits, so a round trip is lossless.
"""

import csv
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from sclsim.attack.cpa import AttackTraceSet
from sclsim.exceptions import EmptyTraceFile, MalformedTraceRow, TraceDimensionMismatch

TRACE_COLUMNS = ["trace_id", "plaintext", "time_idx", "power"]


def export_traces(traces: AttackTraceSet, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for trace_id in range(traces.n_traces):
            pt = traces.plaintexts[trace_id].tobytes().hex()
            for time_idx, power in enumerate(traces.observable[trace_id]):
                writer.writerow([trace_id, pt, time_idx, format(float(power), ".17g")])
    return path


def import_traces(path: Union[str, Path]) -> AttackTraceSet:
    """
    Load an attack trace CSV.

    Raises:
        EmptyTraceFile: the file has no header or no data rows
        MalformedTraceRow: a row (or the header) cannot be parsed; names the line
        TraceDimensionMismatch: traces are not contiguous or differ in length
    """
    path = Path(path)
    with open(path, newline="") as f:
        lines = f.read().splitlines()
    if not any(line.strip() for line in lines):
        raise EmptyTraceFile(f"{path} is empty")

    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if header != TRACE_COLUMNS:
        missing = [c for c in TRACE_COLUMNS if c not in header]
        detail = f"missing column(s) {missing}" if missing else f"unexpected columns {header}"
        raise MalformedTraceRow(f"{detail}; expected {','.join(TRACE_COLUMNS)}", line=1)

    samples: Dict[int, Dict[int, float]] = {}
    plaintexts: Dict[int, str] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != len(TRACE_COLUMNS):
            raise MalformedTraceRow(f"expected {len(TRACE_COLUMNS)} fields, got {len(row)}", line=line_no)
        try:
            trace_id = int(row[0])
            pt = row[1].strip().lower()
            if len(bytes.fromhex(pt)) != 16:
                raise ValueError("plaintext must be 16 bytes")
            time_idx = int(row[2])
            power = float(row[3])
        except ValueError as e:
            raise MalformedTraceRow(str(e), line=line_no) from e
        if not np.isfinite(power):
            raise MalformedTraceRow("power must be finite", line=line_no)
        if plaintexts.setdefault(trace_id, pt) != pt:
            raise MalformedTraceRow(f"trace {trace_id} changes plaintext", line=line_no)
        steps = samples.setdefault(trace_id, {})
        if time_idx in steps:
            raise TraceDimensionMismatch(f"line {line_no}: duplicate sample ({trace_id}, {time_idx})")
        steps[time_idx] = power

    if not samples:
        raise EmptyTraceFile(f"{path} has a header but no traces")
    n_traces = len(samples)
    if sorted(samples) != list(range(n_traces)):
        raise TraceDimensionMismatch("trace ids must be contiguous from 0")
    n_samples = len(samples[0])
    observable = np.empty((n_traces, n_samples))
    pts: List[bytes] = []
    for trace_id in range(n_traces):
        steps = samples[trace_id]
        if sorted(steps) != list(range(n_samples)):
            raise TraceDimensionMismatch(
                f"trace {trace_id} has {len(steps)} samples, expected time_idx 0..{n_samples - 1}"
            )
        observable[trace_id] = [steps[t] for t in range(n_samples)]
        pts.append(bytes.fromhex(plaintexts[trace_id]))
    return AttackTraceSet(
        plaintexts=np.frombuffer(b"".join(pts), dtype=np.uint8).reshape(n_traces, 16),
        observable=observable,
    )
