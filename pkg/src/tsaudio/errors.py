"""Exception taxonomy shared across the package."""


class AudioFormatError(ValueError):
    """Input file is not a readable RIFF/WAVE PCM16 or IEEE-float container."""


class EmptyInputError(ValueError):
    """Audio or feature input is too short to process."""


class ConfigError(ValueError):
    """Configuration values violate a documented constraint."""


class DimensionError(ValueError):
    """Array shapes are inconsistent with the operation's contract."""


class NumericError(ArithmeticError):
    """A non-finite or degenerate value was produced where finiteness is required."""


class EmptyMaskError(ValueError):
    """A masked-prediction step was asked to run with no masked positions."""


class CheckpointError(RuntimeError):
    """Checkpoint file is missing, truncated, or incompatible with the config."""


class UsageError(RuntimeError):
    """API called out of contract (wrong mode, missing prerequisite call)."""
