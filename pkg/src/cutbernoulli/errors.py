"""Exception hierarchy shared by all modules."""


class CutFemError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgument(CutFemError, ValueError):
    pass


class OutOfDomain(CutFemError, ValueError):
    pass


class EmptyDomain(CutFemError):
    """The level set describes an empty domain or an empty interface."""


class NumericError(CutFemError, ArithmeticError):
    pass


class NoConvergence(CutFemError):
    """An iterative solver did not reach its tolerance.

    The residual history (relative residuals, one per iteration) is kept on
    the exception so callers can report it.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class NonDescent(CutFemError):
    pass


class StationaryPoint(CutFemError):
    """The velocity vanished; the current domain is stationary."""


class ConfigError(CutFemError, ValueError):
    pass
