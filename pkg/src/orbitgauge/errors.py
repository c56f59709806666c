"""Exception types shared across the package."""


class OrbitGaugeError(Exception):
    """Base class for all package-specific errors."""


class OrbitDegenerateError(OrbitGaugeError):
    """The orbit Gram matrix is numerically singular at this point."""


class DivergenceError(OrbitGaugeError):
    """A trajectory left the finite or bounded-loss regime.

    Attributes
    ----------
    step : int or None
        Index of the first step at which the problem was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(OrbitGaugeError):
    """A configuration value or file is invalid."""
