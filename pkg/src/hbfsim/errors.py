"""Exception types raised across the package."""


class HBFError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HBFError, ValueError):
    """Inconsistent dimensions or an illegal configuration value."""


class DomainError(HBFError, ValueError):
    """Argument outside the domain of a mathematical function."""


class RankError(HBFError, ArithmeticError):
    """A matrix that must be inverted is singular or badly conditioned.

    ``subcarrier`` holds the offending subcarrier index when known.
    """

    def __init__(self, message, subcarrier=None):
        super().__init__(message)
        self.subcarrier = subcarrier


class NumericalError(HBFError, ArithmeticError):
    """Non-finite intermediate value or failure of an iterative routine."""


class SizeGuardError(HBFError, ValueError):
    """Search space too large for exhaustive enumeration."""

    def __init__(self, message, size):
        super().__init__(message)
        self.size = size


class SolverFailure(HBFError, RuntimeError):
    """Inner solver failed while evaluating a selection candidate."""

    def __init__(self, message, antenna=None, candidate=None):
        super().__init__(message)
        self.antenna = antenna
        self.candidate = candidate
