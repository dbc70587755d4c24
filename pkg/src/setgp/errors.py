"""Exception hierarchy shared by all modules."""


class SetGPError(Exception):
    """Base class for every error raised by the package."""


class InputError(SetGPError, ValueError):
    """Malformed or inconsistent user input (dimensions, indices, bounds)."""


class ParseError(InputError):
    """A data file could not be parsed.

    Parameters
    ----------
    message : str
        What went wrong.
    line : int, optional
        1-based line number of the offending row.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(SetGPError, ArithmeticError):
    """A numerical procedure failed for a valid input."""


class SingularMatrixError(NumericalError):
    """Cholesky factorization failed.

    Attributes
    ----------
    minor : int
        1-based order of the first leading minor found not to be
        (numerically) positive.
    """

    def __init__(self, minor, message=None):
        self.minor = minor
        if message is None:
            message = f"matrix is numerically singular: leading minor of order {minor} is not positive"
        super().__init__(message)


class ExhaustiveSingularityError(NumericalError):
    """Every candidate hyperparameter produced a singular correlation matrix."""


class UndefinedError(NumericalError):
    """A quantity is mathematically undefined for the given input."""


class PoolExhaustedError(SetGPError):
    """No unevaluated candidate is left in the pool."""
