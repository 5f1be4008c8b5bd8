"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Array dimensions do not conform."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class StateError(RuntimeError):
    """An operation was called in a state where it cannot run."""


class ConfigError(ValueError):
    """An experiment or protocol configuration is invalid."""


class ParseError(ValueError):
    """A data file could not be parsed.

    ``line`` holds the 1-based line number of the offending row when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
