"""Shared exception types."""


class DimensionMismatch(ValueError):
    """Two latent-space objects disagree on vector length."""

    def __init__(self, expected: int, actual: int, what: str = "vector"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected length {expected}, got {actual}")


class UnknownItemError(KeyError):
    """Referenced item_id is not part of the calibrated space."""


class UnknownTokenizerError(KeyError):
    """tokenizer_id has no registered counting function."""
