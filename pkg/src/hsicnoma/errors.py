"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario or sweep configuration."""


class DomainError(ValueError):
    """Operation called outside the index domain it is defined on."""


class SingularRegimeError(ArithmeticError):
    """A closed-form constant has a (near-)zero denominator.

    Callers are expected to fall back to numerical quadrature.
    """

    def __init__(self, message, constants=()):
        super().__init__(message)
        self.constants = tuple(constants)


class NonConvergenceError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class NonPositiveProbabilityError(ValueError):
    """A log-log fit was given a probability that is zero or negative."""
