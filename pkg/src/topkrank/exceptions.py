"""Exception hierarchy shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates an operation's preconditions."""


class InvalidConfigError(ValueError):
    """A hyperparameter or configuration value is out of range."""


class DegenerateDistributionError(ValueError):
    """A sampling law assigns zero mass where a positive marginal is needed."""


class UnsupportedSurrogateError(ValueError):
    """The requested surrogate cannot be used for this operation."""


class DataError(RuntimeError):
    """A query stream or corpus cannot supply what was asked of it."""


class ParseError(DataError):
    """A LETOR-format input line could not be parsed."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number
