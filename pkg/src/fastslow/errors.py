"""Exception types shared across the package."""


class FastSlowError(Exception):
    """Base class for library errors."""


class DomainError(FastSlowError, ValueError):
    """A value lies outside the domain of a map, transform or function."""

    def __init__(self, message: str, value: float | None = None):
        super().__init__(message)
        self.value = value


class EstimatorError(FastSlowError, ValueError):
    """Estimator inputs are inconsistent (e.g. lag cutoff too large for the orbit)."""


class InterpretationError(FastSlowError, ValueError):
    """An SDE interpretation is not valid for the requested noise."""


class EnsembleFailure(FastSlowError, RuntimeError):
    """Too many realizations in an ensemble ended with an error record."""

    def __init__(self, message: str, failed: int, total: int):
        super().__init__(message)
        self.failed = failed
        self.total = total


class ConfigError(FastSlowError, ValueError):
    """A run configuration could not be parsed or resolved."""
