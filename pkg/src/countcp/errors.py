"""Exception types raised by countcp."""


class CountCPError(Exception):
    """Base class for all package errors."""


class DomainError(CountCPError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(CountCPError, ValueError):
    """A configuration is inconsistent or cannot produce a valid result."""


class CalibrationError(CountCPError):
    """The slope heuristic could not produce a positive penalty."""


class SingularCovarianceError(CountCPError, ArithmeticError):
    """The information matrix of a fit is numerically singular."""
