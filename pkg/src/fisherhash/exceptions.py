"""Exception types shared across the package."""


class FisherHashError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(FisherHashError):
    """Invalid configuration or argument combination."""


class DataError(FisherHashError):
    """Malformed or inconsistent dataset files."""


class NumericalError(FisherHashError):
    """Optimization produced non-finite values."""
