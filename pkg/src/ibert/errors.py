"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values or cannot proceed numerically."""


class DataError(ValueError):
    """Malformed dataset, corpus, vocabulary, or configuration input."""


class CheckpointError(ValueError):
    """Checkpoint file is missing, truncated, or has an unsupported layout."""


class TrainingAborted(NumericError):
    """A numeric failure stopped training; parameters keep their last good values."""

    def __init__(self, message, epoch, step):
        super().__init__(f"{message} (epoch {epoch}, step {step})")
        self.epoch = epoch
        self.step = step
