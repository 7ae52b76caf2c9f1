"""Exception types shared across the package."""


class HeliosError(Exception):
    """Base class for all library errors."""


class DomainError(HeliosError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(HeliosError, ValueError):
    """A configuration value violates a documented invariant."""


class DataError(HeliosError, ValueError):
    """Supplied data fails a structural consistency check."""


class NumericError(HeliosError, RuntimeError):
    """A numerical procedure broke down (factorization, pivot, quadrature)."""
