"""Exception hierarchy shared across the package."""


class MurfError(Exception):
    """Base class for package errors."""


class ConfigError(MurfError):
    """Malformed or inconsistent configuration input."""


class DataError(MurfError):
    """Malformed or inconsistent numeric data input."""


class NumericsError(MurfError):
    """Numerical failure (non-convergence, invalid operator, ...)."""
