"""Exception types shared across the package."""


class BootdiffError(Exception):
    pass


class ShapeError(BootdiffError, ValueError):
    """Dimension mismatch between an operator/network and its input."""


class ConfigError(BootdiffError, ValueError):
    """Invalid or inconsistent configuration."""


class NumericError(BootdiffError, ArithmeticError):
    """Non-finite values or a singular system where one was not allowed."""


class DivergenceError(NumericError):
    """A trajectory or training run left the finite/stable regime."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
