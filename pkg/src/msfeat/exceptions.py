"""Exception hierarchy shared across the package."""


class MsfeatError(Exception):
    """Base class for all errors raised by msfeat."""


class SizingError(MsfeatError, ValueError):
    """An image or patch is too small for the requested geometry."""


class ConfigError(MsfeatError, ValueError):
    """Inconsistent or invalid configuration."""


class CapacityError(MsfeatError, ValueError):
    """A request exceeds a hard enumeration or size bound."""


class ConvergenceError(MsfeatError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance.

    Attributes
    ----------
    residual : float
        The residual (KKT violation, duality gap, ...) at termination.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class NumericalError(MsfeatError, FloatingPointError):
    """Non-finite values appeared during a computation."""


class ModelFileError(MsfeatError):
    """Base class for model-file format errors."""


class ChecksumError(ModelFileError):
    pass


class VersionError(ModelFileError):
    pass


class TruncationError(ModelFileError):
    pass


class KindMismatchError(ModelFileError):
    pass


class LayoutError(MsfeatError, ValueError):
    """A dataset directory does not follow the expected layout."""
