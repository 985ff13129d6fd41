"""Exception types shared across the package."""


class HdlearnError(Exception):
    """Base class for all domain errors raised by this package."""


class ShapeMismatchError(HdlearnError, ValueError):
    pass


class NonFiniteError(HdlearnError, ArithmeticError):
    """A computation produced a NaN or infinity."""


class SingularConstraintError(HdlearnError):
    """The constraint system could not be solved, even by least squares."""


class IntegrationError(HdlearnError):
    """Integration failed; carries the step index at which it happened."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class PlacementError(HdlearnError):
    """Random particle placement failed to satisfy the overlap criterion."""


class DivergenceError(HdlearnError):
    """Energy or loss exceeded the divergence guard."""


class CheckpointError(HdlearnError, ValueError):
    """A checkpoint file is missing, truncated, or malformed."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{message} (field: {field})")
        self.field = field


class DomainError(HdlearnError, ValueError):
    """An input lies outside the range an operation is defined on."""


class ConfigError(HdlearnError, ValueError):
    """A run configuration contains unknown keys or invalid values."""
