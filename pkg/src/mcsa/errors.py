"""Exception hierarchy shared by every module."""


class McsaError(Exception):
    """Base class for toolkit errors."""


class DomainError(McsaError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class ConfigurationError(McsaError, ValueError):
    """Inconsistent or invalid configuration (e.g. aliasing, zero-sized layer)."""


class ScheduleError(ConfigurationError):
    """A harmonic n-schedule cannot be applied to the requested k values."""


class NotFoundError(McsaError, KeyError):
    """A requested fixture case is absent."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class CoverageError(McsaError, ValueError):
    """A prediction grid does not cover every harmonic order of a fixture."""


class ParseError(McsaError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(McsaError, ValueError):
    """Parsed data violates an invariant (e.g. duplicate harmonic order)."""


class ProtocolError(McsaError, ValueError):
    """Nibble reads arrive with wrong or swapped select flags."""


class TrainingError(McsaError, ValueError):
    """Training cannot start (e.g. a single-class dataset)."""


class DivergenceError(McsaError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"loss became non-finite at epoch {epoch}")
