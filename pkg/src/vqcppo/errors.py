class ConfigurationError(ValueError):
    """Inconsistent sizes, invalid indices or malformed configuration."""


class NumericError(ArithmeticError):
    """A non-finite value showed up where a finite one is required."""
