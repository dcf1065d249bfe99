"""
Exception hierarchy

Every error raised by the engine carries a short message plus an optional
``detail`` string with diagnostics.
"""

from typing import Optional


class A0CError(Exception):
    """Base class for all engine errors"""

    def __init__(self, error: str, detail: Optional[str] = None):
        super().__init__(error if detail is None else f"{error}: {detail}")
        self.error = error
        self.detail = detail


class BoundsViolationError(A0CError):
    """Action outside the environment's action box"""


class DomainError(A0CError, ValueError):
    """Argument outside the mathematical domain of a function"""


class DimensionError(A0CError, ValueError):
    """Array shapes do not match what the operation expects"""


class NumericError(A0CError, ArithmeticError):
    """Non-finite loss, gradient or parameter"""

    def __init__(self, error: str, term: Optional[str] = None, detail: Optional[str] = None):
        super().__init__(error if term is None else f"{error} [{term}]", detail)
        self.term = term


class SearchError(A0CError, RuntimeError):
    """Internal tree search contract violated"""


class ConfigurationError(A0CError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry"""

    def __init__(self, key: str, detail: Optional[str] = None):
        super().__init__(f"invalid configuration key '{key}'", detail)
        self.key = key


class ReportFormatError(A0CError, ValueError):
    """Result file with unexpected or inconsistent columns"""
