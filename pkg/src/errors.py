"""
Exception hierarchy for hadamard-nnls.
Every error raised on purpose by the toolkit derives from NnlsError.
"""

from typing import Any, List, Optional


class NnlsError(Exception):
    """Base class for toolkit errors."""
    pass


class DimensionError(NnlsError):
    """Raised when operand shapes do not conform."""
    pass


class DomainError(NnlsError):
    """Raised when an argument lies outside the domain of an operation."""
    pass


class DivergenceError(NnlsError):
    """Raised when an iterate stops being finite.

    Carries the trace recorded up to the last finite iterate so callers can
    report where the run broke down.
    """

    def __init__(self, message: str, trace: Optional[List[Any]] = None,
                 iteration: Optional[int] = None):
        super().__init__(message)
        self.trace = list(trace or [])
        self.iteration = iteration

    @property
    def last_point(self) -> Optional[Any]:
        return self.trace[-1] if self.trace else None


class MaxItersError(NnlsError):
    """Raised when an iteration budget runs out before termination."""

    def __init__(self, message: str, best: Any = None, iterations: int = 0):
        super().__init__(message)
        self.best = best
        self.iterations = iterations


class ParseError(NnlsError):
    """Raised when a problem, spec or solution file cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None,
                 field: Optional[str] = None):
        context = []
        if line is not None:
            context.append(f"line {line}")
        if field is not None:
            context.append(f"field '{field}'")
        prefix = f"{', '.join(context)}: " if context else ""
        super().__init__(f"{prefix}{message}")
        self.line = line
        self.field = field


class ValidationError(NnlsError):
    """Raised when an object violates its invariants."""

    def __init__(self, issues: List[str], subject: str = "Validation"):
        self.issues = list(issues)
        super().__init__(f"{subject} failed:\n" + "\n".join(f"- {issue}" for issue in self.issues))


class OutputError(NnlsError):
    """Raised when a result file cannot be written."""
    pass


class FallbackSignal(NnlsError):
    """Raised when a Barzilai-Borwein step cannot be formed; use eta0 instead."""
    pass
