"""Exception types raised across the package."""


class LindcircError(Exception):
    """Base class for all package errors."""


class InvalidInputError(LindcircError, ValueError):
    """Input violates a documented precondition (shape, finiteness, range)."""


class ValidationError(InvalidInputError):
    """A physical invariant (Hermiticity, PSD, unitarity, ...) does not hold."""


class RankError(LindcircError):
    """A matrix has larger numerical rank than the operation supports."""


class PatternError(LindcircError):
    """A unitary does not have the sparsity pattern required for synthesis."""


class NegativeDurationError(LindcircError):
    """A product formula produced a negative evolution time."""


class ConsistencyError(LindcircError):
    """An internal reconstruction check failed."""


class ParseError(InvalidInputError):
    """Malformed input text. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
