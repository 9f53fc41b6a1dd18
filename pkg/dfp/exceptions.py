from __future__ import annotations


class DFPError(Exception):
    """Base class for every error raised by the dfp package."""


class InvalidArgument(DFPError, ValueError):
    pass


class ShapeError(DFPError, ValueError):
    pass


class InvalidState(DFPError, RuntimeError):
    pass


class ConfigError(DFPError, ValueError):
    pass


class CheckpointError(DFPError):
    pass


class CorruptCheckpoint(CheckpointError):
    pass


class UnsupportedVersion(CheckpointError):
    pass


class TrainingDiverged(DFPError, RuntimeError):
    def __init__(self, message: str, *, step: int, loss: float) -> None:
        super().__init__(f"{message} (step={step}, loss={loss!r})")
        self.step = step
        self.loss = loss
