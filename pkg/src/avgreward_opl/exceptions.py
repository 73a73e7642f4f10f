"""
Exception classes for avgreward-opl.

This module defines every custom exception the toolkit raises. All of them
derive from :class:`OPLError`, which carries a message plus a dictionary of
details that identify where the failure happened (trajectory index, penalty,
policy parameters, ...).
"""

from typing import Any, Dict, Optional


class OPLError(Exception):
    """Base exception class for all avgreward-opl errors."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def __str__(self) -> str:
        parts = [self.message]
        if self.details:
            parts.append(" ".join(f"{k}={v}" for k, v in self.details.items()))
        return " | ".join(parts)


class DataError(OPLError):
    """Raised when trajectory data cannot be ingested."""


class ParseError(DataError, ValueError):
    """Raised when a trajectory record is malformed."""

    def __init__(self, message: str = "Malformed trajectory record", **kwargs: Any) -> None:
        super().__init__(message, **kwargs)


class ShapeError(DataError, ValueError):
    """Raised when trajectories disagree on T or d, or arrays are ragged."""

    def __init__(self, message: str = "Inconsistent trajectory shape", **kwargs: Any) -> None:
        super().__init__(message, **kwargs)


class ActionDomainError(DataError, ValueError):
    """Raised when an action is not in {0, 1}."""

    def __init__(self, message: str = "Actions must be binary", **kwargs: Any) -> None:
        super().__init__(message, **kwargs)


class NotIrreducible(OPLError):
    """Raised when the chain induced by a policy is not irreducible."""

    def __init__(
        self, message: str = "Induced Markov chain is not irreducible", **kwargs: Any
    ) -> None:
        super().__init__(message, **kwargs)


class ZeroCoverage(OPLError):
    """Raised when the data distribution misses a state-action pair."""

    def __init__(
        self, message: str = "Data distribution has zero mass on a state-action pair", **kwargs: Any
    ) -> None:
        super().__init__(message, **kwargs)


class NumericalError(OPLError):
    """Raised when a computation produces non-finite values."""

    def __init__(self, message: str = "Non-finite numerical result", **kwargs: Any) -> None:
        super().__init__(message, **kwargs)


class SingularSystem(NumericalError):
    """Raised when a linear system cannot be solved even after jitter."""

    def __init__(self, message: str = "Linear system is singular", **kwargs: Any) -> None:
        super().__init__(message, **kwargs)


class DegenerateData(NumericalError):
    """Raised when data carry no spread (e.g. all states identical)."""

    def __init__(self, message: str = "Degenerate data", **kwargs: Any) -> None:
        super().__init__(message, **kwargs)


class DegenerateRatio(NumericalError):
    """Raised when the ratio normalizer is numerically zero."""

    def __init__(self, message: str = "Ratio normalizer is degenerate", **kwargs: Any) -> None:
        super().__init__(message, **kwargs)


class ZeroDenominator(NumericalError):
    """Raised when the doubly robust estimator has a zero denominator."""

    def __init__(
        self, message: str = "Doubly robust denominator is zero", **kwargs: Any
    ) -> None:
        super().__init__(message, **kwargs)


class ObjectiveUndefined(OPLError):
    """Raised when the policy objective cannot be evaluated at a parameter."""

    def __init__(self, message: str = "Objective undefined at theta", **kwargs: Any) -> None:
        super().__init__(message, **kwargs)


class GradientMismatch(OPLError):
    """Raised when analytic and finite-difference gradients disagree."""

    def __init__(
        self,
        message: str = "Analytic gradient disagrees with finite differences",
        max_rel_error: Optional[float] = None,
        **kwargs: Any,
    ) -> None:
        super().__init__(message, **kwargs)
        self.max_rel_error = max_rel_error


class AllStartsFailed(OPLError):
    """Raised when every optimizer start failed."""

    def __init__(self, message: str = "All optimizer starts failed", **kwargs: Any) -> None:
        super().__init__(message, **kwargs)


class FoldTooSmall(OPLError):
    """Raised when a cross-validation fold holds fewer than two trajectories."""

    def __init__(
        self, message: str = "Cross-validation fold has fewer than 2 trajectories", **kwargs: Any
    ) -> None:
        super().__init__(message, **kwargs)
