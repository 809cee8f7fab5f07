"""Exception hierarchy shared across the package."""


class WarmupLabError(Exception):
    """Base class for every error raised by warmup_lab."""


class ShapeMismatch(WarmupLabError, ValueError):
    pass


class NumericalError(WarmupLabError, ArithmeticError):
    """Non-finite values or a kernel that failed to converge."""


class DegenerateGradient(WarmupLabError):
    """The LMO is undefined for a zero direction under this geometry."""


class DegenerateInput(WarmupLabError, ValueError):
    pass


class InvalidStep(WarmupLabError, ValueError):
    pass


class InvalidCoefficients(WarmupLabError, ValueError):
    pass


class SchedulerInitError(WarmupLabError):
    pass


class FitError(WarmupLabError):
    pass


class ConfigError(WarmupLabError, ValueError):
    pass
