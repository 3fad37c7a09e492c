"""Exception hierarchy.

Every error raised on bad input derives from :class:`Icon2Error` so the CLI
can map them to exit code 2 in one place.
"""

from __future__ import annotations


class Icon2Error(Exception):
    """Base class for all toolkit errors."""


class SchemaNotFoundError(Icon2Error, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class ParseError(Icon2Error, ValueError):
    pass


class IntegrityError(Icon2Error, ValueError):
    pass


class FormatError(Icon2Error, ValueError):
    pass


class UsageError(Icon2Error, ValueError):
    pass


class BinningError(Icon2Error, ValueError):
    pass


class SpecError(Icon2Error, ValueError):
    pass


class UndefinedAPError(Icon2Error, ArithmeticError):
    """AP cannot be computed (no positives, or no scored detections)."""

    def __init__(self, message: str, n_i: int = 0):
        super().__init__(message)
        self.n_i = n_i


class SpreadUndefinedError(Icon2Error, ArithmeticError):
    pass


class ProxyUndefinedError(Icon2Error, ArithmeticError):
    def __init__(self, message: str, value: str | None = None):
        super().__init__(message)
        self.value = value
