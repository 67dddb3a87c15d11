"""Adversary oracle: CPA key ranking, measurements-to-disclosure and trace files."""

from sclsim.attack.cpa import (
    AttackTraceSet,
    CpaAccumulator,
    cpa_rank,
    guess_correlation_rows,
    hypothesis_matrix,
    measurements_to_disclosure,
    pearson,
)
from sclsim.attack.io import TRACE_COLUMNS, export_traces, import_traces

__all__ = [
    "TRACE_COLUMNS",
    "AttackTraceSet",
    "CpaAccumulator",
    "cpa_rank",
    "export_traces",
    "guess_correlation_rows",
    "hypothesis_matrix",
    "import_traces",
    "measurements_to_disclosure",
    "pearson",
]
