"""Exception hierarchy shared by every module."""


class SNSEError(Exception):
    """Base class."""

    exit_code = 3


class ConfigurationError(SNSEError, ValueError):
    """Invalid user-facing parameter (bad domain, n_modes, dt, ...)."""

    exit_code = 2


class ContractError(SNSEError, ValueError):
    """Caller violated an operation precondition (shape mismatch etc.)."""

    exit_code = 2


class NumericError(SNSEError, ArithmeticError):
    """Eigensolver failure or another unrecoverable numerical problem."""

    exit_code = 3


class BlowUpError(NumericError):
    """A trajectory left the finite range; carries the offending step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
