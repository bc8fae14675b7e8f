"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class UsageError(ValueError):
    """An operation was called outside its contract (bad argument, bad state)."""


class DatasetFormatError(ValueError):
    """A dataset or model file failed to parse or validate."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class OptimizationError(RuntimeError):
    """Mask optimization produced a non-finite objective."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"mask optimization failed at step {step}")


class UndefinedCorrelationError(ValueError):
    """Rank correlation is undefined (zero variance input)."""
