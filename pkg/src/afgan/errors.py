"""Exception types shared across the package."""


class AfganError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AfganError):
    """Invalid configuration: bad values, unknown keys, or dimension mismatches."""


class EncoderUnavailableError(AfganError):
    """A requested image-encoder backbone is not registered or cannot be built."""


class CheckpointError(AfganError):
    """Checkpoint archive is malformed, has the wrong format tag, or does not
    match the model it is being loaded into."""


class TrainingDivergedError(AfganError):
    """A loss became non-finite during training."""
