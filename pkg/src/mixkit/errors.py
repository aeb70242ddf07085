"""Exception types shared across the package."""


class MixkitError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(MixkitError):
    """Tensor shapes are incompatible for the requested operation."""


class ParameterError(MixkitError):
    """An argument is outside its valid range."""


class CapacityError(MixkitError):
    """A fixed-size mixing module received a sequence longer than it supports."""


class ConfigError(MixkitError):
    """A configuration document is malformed or inconsistent."""


class UsageError(MixkitError):
    """An API was called in an unsupported way (e.g. backward on a non-scalar)."""


class DataError(MixkitError):
    """Input data is malformed (bad token id, bad label, bad TSV row)."""


class AnalysisError(MixkitError):
    """A model introspection was requested that the model cannot provide."""


class GenerationError(MixkitError):
    """Synthetic data generation failed to satisfy its constraints."""


class TrainingDiverged(MixkitError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")
