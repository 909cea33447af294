"""Exception types raised across the package."""


class LeastActionError(Exception):
    """Base class for all package errors."""


class InvalidPathError(LeastActionError, ValueError):
    pass


class DomainError(LeastActionError, ValueError):
    """A system could not be evaluated at the requested state.

    ``index`` carries the offending batch/slice index when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DivergenceError(LeastActionError, ArithmeticError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(LeastActionError, ValueError):
    pass


class EphemerisParseError(LeastActionError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegeneracyError(LeastActionError, ArithmeticError):
    pass
