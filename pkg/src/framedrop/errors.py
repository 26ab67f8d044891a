"""Exception types shared across the package."""


class FramedropError(Exception):
    """Base class for all package errors."""


class ConfigError(FramedropError, ValueError):
    """Invalid configuration value or unknown identifier."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ParseError(FramedropError, ValueError):
    """Malformed input text. Carries the 1-based line number and key when known."""

    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.key = key


class FitError(FramedropError, ValueError):
    """Energy profile fit cannot be computed from the given observations."""


class UndefinedMetricError(FramedropError, ArithmeticError):
    """A metric has no defined value for the given input (e.g. zero denominator)."""
