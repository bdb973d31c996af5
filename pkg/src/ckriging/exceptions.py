"""Exception types shared across the package."""


class CkrigingError(Exception):
    """Base class for all ckriging errors."""


class ShapeError(CkrigingError, ValueError):
    """Array dimensions do not match what an operation requires."""


class InputError(CkrigingError, ValueError):
    """Input values are invalid (non-finite entries, non-positive variances, ...)."""


class ParameterError(CkrigingError, ValueError):
    """A configuration parameter is out of its valid range."""


class ConditioningError(CkrigingError, RuntimeError):
    """A covariance matrix could not be factorized (numerically not positive definite)."""


class UndefinedMetricError(CkrigingError, ValueError):
    """A quality metric is undefined for the given targets (e.g. constant truth)."""
