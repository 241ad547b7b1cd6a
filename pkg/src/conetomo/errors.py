"""Exception hierarchy shared by every module of the package."""


class ConeTomoError(Exception):
    """Base class for all package errors."""


class DomainError(ConeTomoError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class SingularityError(DomainError):
    """Division by a vanishing profile value (q(r) = 0)."""


class ProfileInvalidError(DomainError):
    """The curve profile is not strictly positive on the requested range."""


class BolkerViolationError(DomainError):
    """g = q'/q is not injective on the scan window, so it cannot be inverted."""


class OutOfRangeError(DomainError):
    """A value falls outside the range of g on the scan window."""


class InvisibleCovectorError(DomainError):
    """Horizontal or vertical covectors have no image under the canonical relation."""


class GridFormatError(ConeTomoError):
    """Malformed CRGRID / matrix cache file."""


class DimensionMismatchError(ConeTomoError, ValueError):
    """Grid shape does not match the operator it is applied to."""
