class DpganError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(DpganError, ValueError):
    """An operation was called with arguments that violate its preconditions."""


class CheckpointError(DpganError):
    """A checkpoint file is corrupt, truncated, or from another schema version."""


class ImageFormatError(DpganError):
    """An image or layout file could not be decoded."""


class ConfigError(DpganError):
    """A run configuration contains unknown keys or invalid values."""


class NumericAbort(DpganError):
    """Training produced a non-finite value."""

    def __init__(self, message, step=None, metrics=None):
        super().__init__(message)
        self.step = step
        self.metrics = metrics or {}
