"""Exception hierarchy shared by the simulator and the check suites."""


class PlnsError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PlnsError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(InvalidInputError):
    """A run configuration file could not be parsed or validated."""


class DensityFloorError(PlnsError):
    """The density dropped below the Galerkin floor ``delta``.

    ``state`` carries the offending (partially advanced) state when available so
    that callers can still record diagnostics for it.
    """

    def __init__(self, message, state=None, min_density=None):
        super().__init__(message)
        self.state = state
        self.min_density = min_density


class CFLError(PlnsError):
    """The transport Courant number exceeds its admissible limit."""

    def __init__(self, message, courant=None):
        super().__init__(message)
        self.courant = courant


class NumericalBreakdownError(PlnsError):
    """A linear solve or iteration failed; ``info`` holds diagnostic values."""

    def __init__(self, message, info=None):
        super().__init__(message)
        self.info = dict(info or {})
