"""Exception hierarchy shared by every layer of the package."""


class DataCollabError(Exception):
    """Base class for all errors raised by datacollab."""

    exit_code = 1


class DimensionError(DataCollabError, ValueError):
    exit_code = 3


class RankError(DataCollabError, ArithmeticError):
    """Raised when a matrix is too rank-deficient for the requested operation.

    The offending singular values are kept on ``sigma`` so callers can
    report the spectrum.
    """

    exit_code = 3

    def __init__(self, message, sigma=None):
        super().__init__(message)
        self.sigma = sigma


class ValidationError(DataCollabError, ValueError):
    exit_code = 2


class ConfigError(DataCollabError, ValueError):
    exit_code = 2


class LoadError(DataCollabError, ValueError):
    exit_code = 2


class ProtocolError(DataCollabError):
    exit_code = 4


class DecodeError(ProtocolError, ValueError):
    pass


class PhaseError(DataCollabError):
    """Wraps a module error with the algorithm phase it occurred in."""

    def __init__(self, phase, cause):
        super().__init__(f"phase {phase}: {cause}")
        self.phase = phase
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
