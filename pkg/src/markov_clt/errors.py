"""Exception hierarchy.

Validation problems derive from ``ValueError``; failures of a numerical
precondition (stability, positive semi-definiteness, degenerate covariance)
derive from :class:`NumericalError`. The CLI maps the former to exit code 1
and the latter to exit code 2.
"""


class DimensionError(ValueError):
    """Array shapes are inconsistent."""


class DomainError(ValueError):
    """A scalar argument lies outside its admissible range."""


class StructureError(ValueError):
    """A Markov chain is reducible or periodic where that is not allowed."""


class ConfigError(ValueError):
    """An experiment configuration is malformed."""


class NumericalError(ArithmeticError):
    """Base class for numerical precondition failures."""


class StabilityError(NumericalError):
    """A matrix required to be Hurwitz is not."""


class NotPSDError(NumericalError):
    """A matrix required to be positive semi-definite is not."""


class DegenerateCovarianceError(NumericalError, ConfigError):
    """An asymptotic covariance required to be positive definite is singular.

    Also a :class:`ConfigError`: a chain/reward pair with singular covariance
    is an unusable experiment configuration. The CLI still reports it as a
    numerical failure (exit 2).
    """
