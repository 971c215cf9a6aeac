"""Exception types shared across the package."""


class QregError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(QregError, ValueError):
    """Array shapes are inconsistent with the requested operation."""


class ParameterError(QregError, ValueError):
    """A generator or solver parameter is out of its valid range."""


class DegenerateDenominatorError(QregError, ArithmeticError):
    """The quotient denominator vanished, so the ratio is undefined."""


class DegenerateProblemError(QregError, RuntimeError):
    """Every restart of a learning run aborted; no usable result."""


class FormatError(QregError, ValueError):
    """A file could not be parsed in its declared format.

    Carries enough location detail (path plus line or byte offset) to
    point at the offending spot.
    """

    def __init__(self, message, path=None, line=None, offset=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"byte {offset}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.path = path
        self.line = line
        self.offset = offset


class ConfigError(QregError, ValueError):
    """An experiment configuration is malformed or references missing data."""
