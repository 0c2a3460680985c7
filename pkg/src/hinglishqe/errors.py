"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalError -> 4.
"""


class HinglishQEError(Exception):
    """Base class for all package errors."""


class ConfigError(HinglishQEError):
    """Invalid or inconsistent configuration (flags, config file, checkpoint)."""


class DataError(HinglishQEError):
    """Malformed or missing input data (corpus files, embedding files)."""


class CheckpointError(ConfigError):
    """Checkpoint cannot be loaded or does not match the requested config."""


class NumericalError(HinglishQEError):
    """Non-finite value produced during a forward/backward pass or update."""
