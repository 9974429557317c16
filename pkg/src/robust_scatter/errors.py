"""Exceptions and warnings shared across the package."""


class RobustScatterError(Exception):
    """Base class for all package errors."""


class QuadratureError(RobustScatterError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (estimated residual {residual:.3e})")
        self.residual = residual


class TuningError(RobustScatterError):
    """Invalid or unreachable tuning parameter.

    ``max_efficiency`` / ``argmax`` are populated when a target efficiency
    exceeds what the estimator can achieve.
    """

    def __init__(self, message, max_efficiency=None, argmax=None):
        super().__init__(message)
        self.max_efficiency = max_efficiency
        self.argmax = argmax


class DegenerateDataError(RobustScatterError):
    """Data cannot support the requested estimate (rank, size, or ties)."""


class SpecFormatError(RobustScatterError):
    """A key=value spec string or config file failed to parse."""


class DegenerateScaleWarning(UserWarning):
    """The M-scale constraint was flat; the supremum root was returned."""


class InitialEstimateWarning(UserWarning):
    """The robust starting point fell back to the identity shape."""
