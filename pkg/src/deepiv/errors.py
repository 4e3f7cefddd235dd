"""Exception hierarchy shared across the package."""


class DeepIVError(Exception):
    """Base class for all package errors."""


class DomainError(DeepIVError, ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeMismatch(DeepIVError, ValueError):
    """Array shapes are incompatible."""


class SingularMatrix(DeepIVError, ArithmeticError):
    """A moment matrix is numerically singular.

    In the second stage this is the finite-sample symptom of weak or
    irrelevant instruments.
    """


class BasisTooLarge(DeepIVError, ValueError):
    """A spline design would exceed the configured column cap."""


class NonConvergence(DeepIVError, RuntimeError):
    """An iterative solver hit its iteration limit."""


class NonPositiveInner(DeepIVError, ArithmeticError):
    """The Hausman inner covariance difference is not positive definite."""


class MissingExogenous(DeepIVError, ValueError):
    """The exogenous-regressor estimator was called without exogenous data."""
