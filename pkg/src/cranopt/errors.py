"""Exception types shared across the package."""


class CranoptError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(CranoptError, ValueError):
    """Operands have incompatible shapes."""


class SingularMatrixError(CranoptError):
    """A matrix required to be (strictly) positive definite is not."""


class ConvergenceError(CranoptError):
    """An iterative routine failed to converge."""


class EigenConvergenceError(ConvergenceError):
    """The eigensolver did not converge."""


class NewtonMaxIterationsError(ConvergenceError):
    """The interior-point Newton loop hit its iteration cap."""


class InfeasibleStartError(CranoptError):
    """The supplied starting point violates a constraint."""


class NonMonotoneProgressError(CranoptError):
    """The outer objective decreased beyond solver slack (solver bug guard)."""


class InvalidLayoutError(CranoptError, ValueError):
    """Requested cell count does not form a valid hexagonal layout."""


class RankDeficientError(CranoptError):
    """A covariance factorization has no usable signal directions."""


class ConfigError(CranoptError, ValueError):
    """Scenario configuration is invalid; message carries the offending field."""


class DimensionTooLargeError(CranoptError, ValueError):
    """Problem dimensions exceed what the brute-force oracle supports."""
