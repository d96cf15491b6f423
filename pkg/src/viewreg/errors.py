"""Exception hierarchy.

Every error carries a stable ``kind`` string (the class name) which the CLI
surfaces as ``error_kind`` in its JSON error reports.
"""

from __future__ import annotations


class ViewRegError(Exception):
    """Base class for all library errors."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class InvalidInput(ViewRegError, ValueError):
    pass


class DimMismatch(ViewRegError, ValueError):
    pass


class ShapeError(ViewRegError, ValueError):
    pass


class NotPositiveDefinite(ViewRegError, ValueError):
    pass


class NotSymmetric(ViewRegError, ValueError):
    pass


class NumericOverflow(ViewRegError, OverflowError):
    pass


class InsufficientSamples(ViewRegError, ValueError):
    pass


class InvalidCoefficient(ViewRegError, ValueError):
    pass


class InvalidMargin(ViewRegError, ValueError):
    pass


class DegenerateEmbedding(ViewRegError, ValueError):
    pass


class InvalidStep(ViewRegError, ValueError):
    pass


class DivergedError(ViewRegError, ArithmeticError):
    """Optimization produced a non-finite loss."""

    def __init__(self, iteration: int, message: str | None = None):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")


class MissingReference(ViewRegError, ValueError):
    """No unique azimuth-0 reference row in an embedding file."""


class ParseError(ViewRegError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(ViewRegError, ValueError):
    def __init__(self, message: str, keys: list[str] | None = None):
        self.keys = list(keys or [])
        if self.keys:
            message = f"{message}: {', '.join(self.keys)}"
        super().__init__(message)


class UsageError(ViewRegError, ValueError):
    pass
