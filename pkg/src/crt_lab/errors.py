"""Exception types raised across the package."""


class CrtError(Exception):
    """Base class for all package errors."""


class InvalidInputError(CrtError, ValueError):
    """Input data violates a documented precondition."""


class InconsistentObservationError(CrtError, ValueError):
    """An observation has zero probability under every value being resampled."""


class SimulationOverflowError(CrtError, RuntimeError):
    """A simulated trial failed to terminate within the press cap."""


class ConfigurationError(CrtError, ValueError):
    """An experiment specification is invalid or internally inconsistent."""


class ResampleError(CrtError, RuntimeError):
    """A statistic or resampler failed while building the null ensemble."""

    def __init__(self, index, cause):
        where = "batch" if index is None else f"resample {index}"
        super().__init__(f"{where} failed: {cause!r}")
        self.index = index


class SessionError(CrtError, RuntimeError):
    """A single session of a batch experiment failed."""

    def __init__(self, session_index, cause):
        super().__init__(f"session {session_index} failed: {cause!r}")
        self.session_index = session_index


class ReportWriteError(CrtError, OSError):
    """A report could not be written to its destination."""

    def __init__(self, path, cause):
        super().__init__(f"cannot write report to {path}: {cause}")
        self.path = path
