"""Exception hierarchy.

Everything a caller can fix by changing inputs derives from ``ValidationError``;
the CLI maps those to exit code 1 and anything else to exit code 2.
"""


class ValidationError(ValueError):
    """Bad input, configuration or arguments."""


class ShapeError(ValidationError):
    pass


class DegenerateInputError(ValidationError):
    pass


class ContractError(ValidationError):
    """A call violates a documented precondition of the API."""


class FormatError(ValidationError):
    """Malformed file contents. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CheckpointError(ValidationError):
    pass


class UndefinedCorrelationError(ValidationError):
    pass


class NonFiniteError(ArithmeticError):
    """A loss or gradient turned NaN/inf during training."""
