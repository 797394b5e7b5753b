"""Exception types shared across the package."""


class SpixelError(Exception):
    """Base class for all package errors."""


class ShapeError(SpixelError, ValueError):
    """Tensor or array shapes do not line up."""


class ConfigError(SpixelError, ValueError):
    """Invalid configuration (sizes, divisibility, unknown keys, ...)."""


class UsageError(SpixelError, RuntimeError):
    """An API was called in a way its contract forbids."""


class GraphUsageError(UsageError):
    """Autodiff graph misuse, e.g. a second backward pass on a spent graph."""


class CheckpointFormatError(SpixelError, ValueError):
    """Checkpoint file is corrupt, truncated, or has the wrong magic/version."""


class CheckpointCompatError(SpixelError, ValueError):
    """Checkpoint does not match the model it is being loaded into."""


class DataError(SpixelError, ValueError):
    """Malformed dataset files or unpaired samples."""


class TrainingDiverged(SpixelError, RuntimeError):
    """A loss term became non-finite during training."""
