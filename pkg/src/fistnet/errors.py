"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An argument violates a documented precondition or invariant."""


class DecodeError(ValueError):
    """Bytes that were expected to decode as an 8-bit RGB raster did not."""


class DatasetError(ValueError):
    """Dataset ingestion failed (empty directory or undecodable members)."""

    def __init__(self, message: str, corrupt_paths: list[str] | None = None):
        super().__init__(message)
        self.corrupt_paths = corrupt_paths or []


class InsufficientSamplesError(ValueError):
    """Fewer samples than a statistic needs."""


class DivergenceError(RuntimeError):
    """A loss became non-finite during optimization.

    Carries the loss trajectory observed so far and, when a trainer aborts,
    the path of the last checkpoint written before the abort.
    """

    def __init__(self, message: str, trajectory: list[float] | None = None,
                 checkpoint_path: str | None = None):
        super().__init__(message)
        self.trajectory = trajectory or []
        self.checkpoint_path = checkpoint_path


class CheckpointError(RuntimeError):
    """Base class for checkpoint load/save failures."""


class VersionMismatchError(CheckpointError):
    """Checkpoint format version is not the one this build writes."""


class IntegrityError(CheckpointError):
    """Checkpoint payload does not match its recorded digest."""


class ConfigMismatchError(CheckpointError):
    """Checkpoint config hash differs from the active run config."""


class NumericalError(RuntimeError):
    """A numerical routine left its domain of validity.

    Carries the offending operands so failures can be reproduced.
    """

    def __init__(self, message: str, operands: dict | None = None):
        super().__init__(message)
        self.operands = operands or {}
