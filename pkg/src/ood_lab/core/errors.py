class OodLabError(Exception):
    """Base class for every error raised by ood-lab."""


class InvalidInputError(OodLabError, ValueError):
    pass


class NumericalError(OodLabError, ArithmeticError):
    pass


class ConfigurationError(OodLabError):
    pass


class InvalidStateError(OodLabError):
    pass


class DatasetParseError(OodLabError):
    """Malformed dataset file; `line` is the 1-based line number in the file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
