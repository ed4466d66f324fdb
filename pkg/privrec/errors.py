"""
Exception hierarchy for privrec.

Every error derives from :class:`PrivrecError` and from the builtin exception
a caller would naturally expect (``ValueError`` for bad arguments,
``IndexError`` for bad node ids, ...), so both ``except PrivrecError`` and
``pytest.raises(ValueError)`` work.
"""

from __future__ import annotations

from typing import Optional


class PrivrecError(Exception):
    """Base class for all privrec errors."""


class EdgeListParseError(PrivrecError, ValueError):
    """A data line of an edge list could not be parsed."""

    def __init__(self, line_number: int, message: str, line: Optional[str] = None):
        self.line_number = line_number
        self.line = line
        detail = f"line {line_number}: {message}"
        if line is not None:
            detail += f" ({line.strip()!r})"
        super().__init__(detail)


class GraphCacheError(PrivrecError, ValueError):
    """The binary graph cache is truncated or has the wrong magic/version."""


class NodeDomainError(PrivrecError, IndexError):
    """A NodeId (or raw label) does not exist in the graph."""


class DomainError(PrivrecError, ValueError):
    """An argument lies outside the domain of a formula."""


class PreconditionError(PrivrecError, ValueError):
    """The inputs are individually valid but inconsistent with each other."""


class ConfigurationError(PrivrecError, ValueError):
    """Invalid utility or experiment configuration."""


class CapacityError(PrivrecError, ValueError):
    """Input is too large for an exact oracle."""


class UndefinedAccuracyError(PrivrecError, ArithmeticError):
    """Accuracy is undefined because every candidate has zero utility."""


class InfeasibleBoundError(PrivrecError, ArithmeticError):
    """No rewiring constant satisfies the weighted-paths condition."""


class QuadratureError(PrivrecError, ArithmeticError):
    """Quadrature probabilities do not sum to 1 within tolerance."""
