"""Exception types shared across the package."""


class HmodeError(Exception):
    """Base class for package errors."""


class ShapeError(HmodeError, ValueError):
    """Operands have incompatible or otherwise invalid shapes."""


class AnnotationError(HmodeError, ValueError):
    """A head annotation is malformed or out of bounds."""


class DatasetError(HmodeError):
    """A dataset directory or annotation file cannot be used."""


class ConfigError(HmodeError):
    """A configuration file or key is invalid."""


class CheckpointError(HmodeError):
    """A checkpoint file is malformed or does not match the model."""


class TrainingDivergedError(HmodeError):
    """Training produced a non-finite loss component."""
