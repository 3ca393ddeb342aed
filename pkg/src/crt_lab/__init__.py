"""Exact conditional randomization tests for sequential behavioral experiments."""
from .engine import SeedSpec, TailDirection, TestOutcome, derive_stream, p_value, run_crt
from .errors import (
    ConfigurationError,
    CrtError,
    InconsistentObservationError,
    InvalidInputError,
    ResampleError,
    SessionError,
    SimulationOverflowError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "CrtError",
    "InconsistentObservationError",
    "InvalidInputError",
    "ResampleError",
    "SeedSpec",
    "SessionError",
    "SimulationOverflowError",
    "TailDirection",
    "TestOutcome",
    "derive_stream",
    "p_value",
    "run_crt",
]
