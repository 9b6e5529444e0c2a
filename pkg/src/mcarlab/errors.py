"""Exception hierarchy.

Configuration-type problems (bad shapes, invalid parameters) derive from
``ValueError`` so callers can treat them like any other bad argument; numeric
failures (singular score matrices, non-convergence) derive from
``ArithmeticError``.  The CLI maps the two families to distinct exit codes.
"""


class McarError(Exception):
    """Base class for all errors raised by mcarlab."""


class InvalidArgumentError(McarError, ValueError):
    pass


class ConfigurationError(McarError, ValueError):
    pass


class ResourceError(McarError, ValueError):
    """A requested grid or workload exceeds a configured cap."""


class NotStationaryError(McarError, ArithmeticError):
    pass


class InsufficientExcitationError(McarError, ArithmeticError):
    """The quadratic-variation matrix is singular or not positive definite."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class ConvergenceError(McarError, ArithmeticError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class GraphDegenerateError(McarError, ArithmeticError):
    pass
