"""
Exception hierarchy for the rf2pose application.

Every error raised on purpose by the package derives from Rf2PoseError and
carries the process exit code the command-line interface reports for it.
"""
from typing import Optional


class Rf2PoseError(Exception):
    """Base class for all rf2pose errors."""

    exit_code = 1


class ValidationError(Rf2PoseError, ValueError):
    """Input data violates a shape, range or finiteness contract."""

    exit_code = 3


class MapMismatchError(ValidationError):
    """A pose does not fit the skeleton map it is paired with."""


class BoneIndexError(ValidationError, IndexError):
    """A bone (or joint) index is outside the skeleton."""


class StepError(ValidationError):
    """A diffusion step index is outside 1..T."""


class ConfigurationError(Rf2PoseError):
    """A configuration value is missing, malformed or inconsistent."""

    exit_code = 4


class DependencyError(Rf2PoseError):
    """A required upstream artifact is missing or belongs to another run."""

    exit_code = 5


class DivergenceError(Rf2PoseError):
    """A training or sampling loop produced non-finite values."""

    exit_code = 6

    def __init__(self, message: str, epoch: Optional[int] = None, step: Optional[int] = None):
        location = []
        if epoch is not None:
            location.append(f"epoch {epoch}")
        if step is not None:
            location.append(f"step {step}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class NumericError(DivergenceError):
    """Non-finite activations inside a network layer."""

    def __init__(self, message: str, layer: int):
        super().__init__(f"{message} at layer {layer}")
        self.layer = layer


class AlignmentError(ValidationError):
    """Procrustes alignment is undefined for the given prediction."""


class ParseError(ValidationError):
    """A data or configuration file could not be parsed."""

    def __init__(self, path, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ContractViolationError(Rf2PoseError):
    """A frozen model was modified or used in an unfrozen state."""
