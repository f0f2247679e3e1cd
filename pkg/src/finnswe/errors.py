"""Exception types shared across the package."""


class SweError(Exception):
    """Base class for all package errors."""


class ShapeError(SweError, ValueError):
    pass


class DomainError(SweError, ValueError):
    """An input lies outside the domain an operation accepts."""


class DryingError(SweError):
    """Total water column H + eta became non-positive."""


class InstabilityError(SweError):
    """A rollout exceeded the blow-up guard."""


class NonFiniteError(SweError):
    pass


class FormatError(SweError):
    """Malformed or incompatible binary/text file."""


class ConfigError(SweError, ValueError):
    pass
