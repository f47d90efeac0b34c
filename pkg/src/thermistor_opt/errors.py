"""Exception types raised by the solvers and the CLI."""


class ThermistorError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ThermistorError, ValueError):
    """Bad user input: unknown conductivity id, malformed config, invalid parameters."""


class GridMismatchError(ThermistorError, ValueError):
    """Fields or controls defined on incompatible space/time grids."""


class SingularSystemError(ThermistorError, ArithmeticError):
    """A tridiagonal elimination hit a (near-)zero pivot."""

    def __init__(self, message, row=None, level=None):
        super().__init__(message)
        self.row = row
        self.level = level


class DivergenceError(ThermistorError, ArithmeticError):
    """A time-stepper produced non-finite or exploding nodal values."""

    def __init__(self, message, level=None, iteration=None):
        super().__init__(message)
        self.level = level
        self.iteration = iteration


class OracleError(ThermistorError, RuntimeError):
    """The dense reference solver failed to converge its inner iteration."""
