"""Exception types shared across the package."""


class CspError(Exception):
    """Base class for every error raised by cspattn."""


class ShapeError(CspError, ValueError):
    """Operand shapes are incompatible.

    The offending shapes are kept on the instance so callers (and the CLI
    failure record) can report them without parsing the message.
    """

    def __init__(self, message, *shapes):
        super().__init__(message)
        self.shapes = tuple(tuple(s) for s in shapes)


class ConfigError(CspError, ValueError):
    """A configuration value violates its contract."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ConvergenceError(CspError, RuntimeError):
    def __init__(self, message, off_diagonal):
        super().__init__(message)
        self.off_diagonal = off_diagonal


class NumericalError(CspError, FloatingPointError):
    """Non-finite values appeared mid-computation."""

    def __init__(self, message, layer=None, step=None):
        super().__init__(message)
        self.layer = layer
        self.step = step


class TimerResolutionError(CspError, RuntimeError):
    pass
