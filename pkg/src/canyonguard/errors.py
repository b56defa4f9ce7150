"""Shared exception types."""


class ConfigurationError(ValueError):
    """A shape, spec, or setup value is inconsistent with what an operation needs."""


class PreconditionError(ValueError):
    """An operation was called with inputs that violate its stated preconditions."""


class NumericalFault(ArithmeticError):
    """A computation produced non-finite values."""


class StateError(RuntimeError):
    """An object was used in a state that does not allow the operation (e.g. stepping a finished episode)."""


class CalibrationError(RuntimeError):
    """Threshold calibration cannot proceed (degenerate metric distribution)."""


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointCrcError(CheckpointError):
    pass
