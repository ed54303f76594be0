"""Exception types shared across the package."""


class AdaGPRError(Exception):
    """Base class for all package errors."""


class ValidationError(AdaGPRError, ValueError):
    """Input failed a contract check (bad shapes, ranges, files)."""


class StructuralError(ValidationError):
    """Graph structure is invalid, e.g. a node id out of range."""


class EmptyGraphError(ValidationError):
    pass


class DimensionError(ValidationError):
    pass


class SymmetryError(ValidationError):
    pass


class InvalidOrderError(ValidationError):
    """GPR order K < 1."""


class ParameterError(ValidationError):
    pass


class NumericError(ValidationError):
    """Non-finite values where finite ones are required."""


class ContractError(AdaGPRError, RuntimeError):
    """A runtime protocol was violated (e.g. backward called twice)."""


class DatasetError(ValidationError):
    pass


class SplitError(ValidationError):
    pass


class TrainingDivergence(AdaGPRError, RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")
