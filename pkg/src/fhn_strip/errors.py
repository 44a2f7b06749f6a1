"""Exception types shared across the package."""


class FhnStripError(Exception):
    """Base class for all package-specific errors."""


class DomainError(FhnStripError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(FhnStripError, ValueError):
    """A parameter violates a declared constraint.

    Carries the offending field name so callers can report it precisely.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConfigError(FhnStripError, ValueError):
    """A configuration document is malformed or incomplete."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnsupportedOperationError(FhnStripError):
    """The requested operation is not defined for this object kind."""


class BudgetExceededError(FhnStripError):
    """An evaluation budget ran out before the accuracy target was met.

    ``partial`` holds the best available estimate, ``err_estimate`` the
    error bound attached to it.
    """

    def __init__(self, message: str, partial=None, err_estimate=None):
        self.partial = partial
        self.err_estimate = err_estimate
        super().__init__(message)


class AccuracyError(FhnStripError):
    """The requested accuracy is analytically unreachable with the given setup."""


class BlowUpError(FhnStripError):
    """A time integration produced non-finite values.

    ``t_last`` is the last time at which the state was still finite.
    """

    def __init__(self, message: str, t_last: float):
        self.t_last = t_last
        super().__init__(message)


class NonContractionError(FhnStripError):
    """A fixed-point window failed to contract within the iteration budget."""

    def __init__(self, message: str, residual=None):
        self.residual = residual
        super().__init__(message)


class DivergenceError(FhnStripError):
    """An iterate left the configured invariant rectangle."""


class PreconditionError(FhnStripError):
    """A check or solver was invoked on inputs that violate its preconditions."""
