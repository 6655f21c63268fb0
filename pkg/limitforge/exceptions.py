from typing import Iterable, Optional, Tuple


class LimitForgeError(ValueError):
    """Base class for errors raised by limitforge."""


class ExpressionSyntaxError(LimitForgeError):
    """Raised when an expression does not match the function grammar."""

    def __init__(
        self, message: str, offset: int = 0, expected: Iterable[str] = ()
    ) -> None:
        self.offset = offset
        self.expected = tuple(expected)
        super().__init__(message)


class UnknownIdentifierError(LimitForgeError):
    """Raised when an expression uses an identifier other than t, ln, exp, sin or sqrt."""

    def __init__(self, message: str, identifier: str = "", offset: int = 0) -> None:
        self.identifier = identifier
        self.offset = offset
        super().__init__(message)


class NonConstantExponentError(LimitForgeError):
    """Raised when the exponent of '^' is not a numeric literal."""

    def __init__(self, message: str, offset: int = 0) -> None:
        self.offset = offset
        super().__init__(message)


class ExpressionDomainError(LimitForgeError):
    """Raised when an expression is evaluated outside of its natural domain."""

    def __init__(
        self, message: str, subexpression: str = "", t: Optional[float] = None
    ) -> None:
        self.subexpression = subexpression
        self.t = t
        super().__init__(message)


class HypothesisViolation(LimitForgeError):
    """Raised when a sampled function does not satisfy the hypotheses of an operation."""


class QuadratureError(LimitForgeError):
    """Raised when adaptive quadrature exhausts its panel budget."""

    def __init__(
        self, message: str, worst_panel: Optional[Tuple[float, float, float]] = None
    ) -> None:
        self.worst_panel = worst_panel
        super().__init__(message)


class InversionError(LimitForgeError):
    """Raised when a cumulative integral cannot be inverted at the requested value."""


class RootBracketError(LimitForgeError):
    """Raised when a root solver is given an interval that does not bracket a root."""


class FamilyMismatchError(LimitForgeError):
    """Raised when an operation receives a trajectory of an unsupported recurrence family."""


class NoCatalogEntry(LimitForgeError):
    """Raised when no closed-form growth law is known for a recurrence."""


class LawEvaluationError(LimitForgeError):
    """Raised when a growth law cannot be evaluated at a checkpoint."""


class InsufficientCheckpointsError(LimitForgeError):
    """Raised when a trajectory has too few checkpoints for a verdict."""


class InvalidRecurrenceSpec(LimitForgeError):
    """Raised when the initial data of a recurrence is outside its admissible range."""


class ConfigurationError(LimitForgeError):
    """Raised when an experiment configuration or a command argument is invalid."""


class InvalidConfigFormat(ConfigurationError):
    """Raised when the experiment configuration is not valid JSON or YAML."""


class DivergenceWarning(UserWarning):
    """Issued when the integral of 1/g has not visibly diverged at the requested n."""
