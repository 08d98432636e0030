"""Exception hierarchy shared by all modules."""


class QLLError(Exception):
    """Base class for every error raised by this package."""


class InvalidSizeError(QLLError, ValueError):
    pass


class DomainError(QLLError, ValueError):
    pass


class InvalidFFunctionError(QLLError, ValueError):
    pass


class EmbeddingError(QLLError, ValueError):
    pass


class AlgebraError(QLLError, ValueError):
    pass


class ScheduleError(QLLError, ValueError):
    pass


class ConfigError(QLLError, ValueError):
    pass


class CapacityError(QLLError, ValueError):
    pass


class PreconditionError(QLLError, ValueError):
    pass


class FormError(QLLError, ValueError):
    pass


class InsufficientDataError(QLLError, ValueError):
    pass


class ParameterError(QLLError, ValueError):
    pass


class IntegrationError(QLLError, RuntimeError):
    """Step or quadrature refinement failed to converge."""


class GapClosingError(QLLError, RuntimeError):
    """A spectral gap fell below the configured floor along a path."""

    def __init__(self, message, s=None, gap=None):
        super().__init__(message)
        self.s = s
        self.gap = gap
