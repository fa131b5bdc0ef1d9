"""Exception hierarchy shared by every module."""


class SchemeError(Exception):
    """Base class for all errors raised by the package."""


class ConfigurationError(SchemeError, ValueError):
    """Invalid parameters, grids or configuration files."""


class GridMismatchError(SchemeError, ValueError):
    """Two fields that must share a grid do not."""


class NumericalConsistencyError(SchemeError, ArithmeticError):
    """A conservation or replay contract was violated beyond tolerance."""


class InstabilityError(NumericalConsistencyError):
    """An explicit reference solver blew up."""


class UnsupportedExactError(SchemeError, NotImplementedError):
    """No exact algorithm exists for the requested case (use the LP oracle)."""


class SizeError(SchemeError, ValueError):
    """Instance too large for a brute-force oracle."""


class DivergenceError(SchemeError, RuntimeError):
    """An iterative optimizer failed to decrease its objective.

    The objective trace is attached as ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
