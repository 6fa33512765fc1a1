"""Exception types raised by the library."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to reach its accuracy target.

    Raised for quadrature non-convergence, eigensolver stagnation and
    Krylov exponential failures.  ``check`` names the procedure so the CLI
    can report which step broke.
    """

    def __init__(self, message, check=None):
        super().__init__(message)
        self.check = check


class InsufficientModesError(NumericalError):
    """The truncated eigen-expansion tail is too large for the requested time."""


class ConfigError(ValueError):
    """An experiment configuration field is invalid."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
