"""Exception hierarchy shared by the core packages."""
from __future__ import annotations

from typing import Optional


class FakeclrError(Exception):
    """Root of every error raised by this project."""


class InvalidParameterError(FakeclrError, ValueError):
    """A configuration value or argument is outside its allowed range."""


class DegenerateInputError(FakeclrError, ValueError):
    """Input has no well-defined result (e.g. normalizing a zero vector)."""


class ContractViolationError(FakeclrError, ValueError):
    """A caller broke a documented precondition (unit norm, ordering, shapes)."""


class InvalidInputError(FakeclrError, ValueError):
    """Data handed to a metric or loader is malformed."""


class EvaluationError(FakeclrError, ArithmeticError):
    """A function evaluation produced a non-finite value."""


class AbortRunError(FakeclrError, RuntimeError):
    """Training produced a non-finite loss and must stop."""

    def __init__(self, message: str, iteration: int, phase: Optional[str] = None):
        super().__init__(f"{message} (iteration={iteration}, phase={phase or 'n/a'})")
        self.iteration = iteration
        self.phase = phase
