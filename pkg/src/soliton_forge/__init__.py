"""U(1)-invariant gradient steady Ricci solitons on complex line bundles."""

from .core import (
    DegenerateStateError,
    FirstIntegralContext,
    InvalidParameterError,
    PhaseState,
    SolitonParams,
    make_params,
)
from .pipeline import RunConfig, RunResult, run, run_general, run_kahler

__all__ = [
    "DegenerateStateError",
    "FirstIntegralContext",
    "InvalidParameterError",
    "PhaseState",
    "SolitonParams",
    "make_params",
    "RunConfig",
    "RunResult",
    "run",
    "run_general",
    "run_kahler",
]
