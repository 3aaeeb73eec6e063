"""Exception hierarchy.

The CLI maps :class:`DataError` subclasses to exit code 2 and
:class:`NumericalError` subclasses to exit code 3.
"""


class EAHError(Exception):
    """Base class for all package errors."""


class DataError(EAHError, ValueError):
    """Bad input data or configuration."""


class DomainError(DataError):
    """Argument outside the domain of a function (e.g. negative time)."""


class ConfigError(DataError):
    """Invalid model, decay or run configuration."""


class PreconditionError(DataError):
    """An operation was called with inputs violating its preconditions."""


class ParseError(DataError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{':'.join(where)}: {message}"
        super().__init__(message)


class EmptyDataError(DataError):
    """No events (or all-zero counts) where data is required."""


class OrphanEventError(DataError):
    """An event has zero intensity under the model, so it cannot be attributed."""

    def __init__(self, index, time=None):
        self.index = index
        self.time = time
        msg = f"event {index} has zero conditional intensity (mu = 0 and no earlier trigger)"
        if time is not None:
            msg += f" at t={time:.9f}"
        super().__init__(msg)


class CalibrationError(DataError):
    """Calibration target is degenerate (e.g. pinned entry is zero)."""


class NumericalError(EAHError, RuntimeError):
    """Numerical failure: explosion, non-convergence, broken monotonicity."""


class ExplosionError(NumericalError):
    """Simulation exceeded its event cap."""

    def __init__(self, cap):
        self.cap = cap
        super().__init__(f"event cap of {cap} exceeded; the process is exploding")


class TheoryError(NumericalError):
    """A theoretical quantity could not be evaluated (unstable model, no convergence)."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)
