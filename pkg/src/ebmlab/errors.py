"""Exception types shared across the package."""


class EbmError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(EbmError, ValueError):
    """An argument violates a precondition (bad dimension, range, layout)."""


class NumericError(EbmError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class ChainDivergenceError(NumericError):
    """An MCMC chain produced a non-finite state.

    Attributes:
        step_index: index of the sampler step at which divergence was detected.
    """

    def __init__(self, message: str, step_index: int):
        super().__init__(message)
        self.step_index = step_index


class ConfigError(EbmError, ValueError):
    """A config file failed to parse or validate.

    Attributes:
        line: 1-based line number of the offending entry, or None when the
            error is not tied to a single line.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
