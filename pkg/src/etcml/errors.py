"""Exception types raised across the package."""


class EtcError(Exception):
    """Base class for all package errors."""


class InvalidImageError(EtcError, ValueError):
    pass


class PgmFormatError(EtcError, ValueError):
    """A Netpbm file could not be decoded."""


class UnsupportedFormatError(PgmFormatError):
    pass


class MaxvalError(PgmFormatError):
    pass


class TruncatedDataError(PgmFormatError):
    pass


class DimensionError(EtcError, ValueError):
    """Shapes or sizes are incompatible (block size, feature dims, ...)."""


class ConfigError(EtcError, ValueError):
    pass


class SingleClassError(EtcError, ValueError):
    pass


class ConvergenceError(EtcError, RuntimeError):
    """SMO hit its update budget before satisfying the KKT tolerance.

    The partially optimized model is kept on ``model`` so callers can
    still inspect or use it.
    """

    def __init__(self, message, model=None):
        super().__init__(message)
        self.model = model


class OracleError(EtcError, RuntimeError):
    """The exhaustive QP oracle found no KKT point; indicates a bug."""
