"""Exception types raised across the package."""


class FractorsionError(Exception):
    """Base class for all package errors."""


class EmptyDomain(FractorsionError):
    pass


class BoxTooSmall(FractorsionError):
    pass


class LatticeMismatch(FractorsionError):
    pass


class DomainMismatch(FractorsionError):
    pass


class BoxTouchesDomain(FractorsionError):
    pass


class BadExponent(FractorsionError):
    pass


class BadExponentRange(BadExponent):
    pass


class OutOfRange(FractorsionError):
    pass


class NotConverged(FractorsionError):
    """Raised when a solver exhausts its budget.

    The partially converged report is attached as ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class PositivityViolation(FractorsionError):
    pass


class MonotonicityViolation(FractorsionError):
    pass


class NotNested(FractorsionError):
    pass


class NonPositiveTorsion(FractorsionError):
    pass


class TooLarge(FractorsionError):
    pass


class NotP2(FractorsionError):
    pass


class ConfigError(FractorsionError):
    """Invalid run configuration (CLI exit code 65)."""
