"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes or sizes are incompatible with the requested operation."""


class ConfigurationError(ValueError):
    """An option combination is invalid (bad kernel/stride pairing, bad config field)."""


class ContractViolation(ValueError):
    """An input violates a documented value contract (e.g. a blend mask outside [0, 1])."""


class NumericalError(ArithmeticError):
    """Non-finite values showed up where finite ones are required."""


class CheckpointError(RuntimeError):
    """A checkpoint file is malformed, corrupted, or incompatible."""


class FrameIOError(IOError):
    """A frame file or frame directory could not be read or is inconsistent."""


class UsageError(RuntimeError):
    """An operation was invoked in a mode that does not support it."""
