"""Exception hierarchy shared by the library and the command-line tool."""


class TensorReidError(Exception):
    """Base class for all errors raised by this package."""


class ArgumentError(TensorReidError, ValueError):
    """An argument has the wrong shape, range or type."""


class DataError(TensorReidError, ValueError):
    """Input data violates a structural requirement (labels, pairs, files)."""


class NumericError(TensorReidError, ArithmeticError):
    """A numerical routine failed (non-convergence, factorization failure)."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations
