"""Exception hierarchy shared by every module."""


class UnerError(Exception):
    """Base class for all package errors."""


class DomainError(UnerError, ValueError):
    """A parameter lies outside its admissible domain (e.g. a non-positive variance)."""


class DataError(UnerError, ValueError):
    """Input data violates a structural invariant."""


class DegreesOfFreedomError(DataError):
    pass


class DegenerateDataError(DataError):
    """Residual sum of squares is exactly zero, so the variance posterior is improper."""


class ConditionError(UnerError):
    """Posterior propriety conditions failed; carries the failed inequalities."""

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = tuple(failures)


class ConfigError(UnerError, ValueError):
    pass


class NoUnsampledUnitsError(UnerError, ValueError):
    pass


class NumericalError(UnerError, ArithmeticError):
    """A sweep hit a numerical failure; ``sweep`` is the 0-based sweep index."""

    def __init__(self, message, sweep=None):
        if sweep is not None:
            message = f"{message} (sweep {sweep})"
        super().__init__(message)
        self.sweep = sweep


class NumericalRankError(NumericalError):
    pass


class ConditionWarning(UserWarning):
    """The finite-posterior-variance conditions fail; fitting still proceeds."""


class ShortChainWarning(UserWarning):
    pass
