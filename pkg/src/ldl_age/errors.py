"""Exception types shared across the package."""


class LDLError(Exception):
    """Base class for all errors raised by ldl_age."""


class InvalidParameterError(LDLError, ValueError):
    """An argument violates a documented precondition."""


class InvalidStateError(LDLError, RuntimeError):
    """Objects that must match (e.g. a head and its forward trace) do not."""


class DataFormatError(LDLError, ValueError):
    """A dataset or checkpoint file could not be parsed.

    ``line`` is the 1-based line number of the offending row, when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingDivergedError(LDLError, FloatingPointError):
    """The training loss became non-finite."""

    def __init__(self, epoch, batch, value):
        super().__init__(
            f"training diverged at epoch {epoch}, batch {batch} (loss={float(value)!r})"
        )
        self.epoch = epoch
        self.batch = batch
        self.value = value
