"""Exception hierarchy shared across the package."""


class GTTNError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GTTNError, ValueError):
    """Element-count or shape mismatch between tensors."""


class InvalidPermutationError(GTTNError, ValueError):
    pass


class InvalidSubsetError(GTTNError, ValueError):
    pass


class InvalidOrderError(GTTNError, ValueError):
    pass


class InvalidModeError(GTTNError, ValueError):
    """Operation not defined for the regularizer's weight mode."""


class NumericalError(GTTNError, ArithmeticError):
    """Raised on SVD non-convergence or non-finite gradients.

    Parameters
    ----------
    message : str
    iterations : int, optional
        Iteration count reached when the failure was detected.
    """

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class FormatError(GTTNError, ValueError):
    """Malformed GTN1 tensor file or dataset manifest."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ConfigError(GTTNError, ValueError):
    """Invalid run configuration; ``problems`` lists every violation found."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [message])
