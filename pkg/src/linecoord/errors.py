"""Exception types raised across the package."""


class LinecoordError(Exception):
    """Base class for package errors."""


class ConditioningError(LinecoordError, ValueError):
    """Conditioning on an event of probability zero."""


class PreconditionError(LinecoordError, ValueError):
    """An operation's input does not satisfy its documented precondition."""


class ResourceBudgetError(LinecoordError, RuntimeError):
    """Exact computation would exceed the configured operation or memory budget.

    Attributes
    ----------
    required : float
        Estimated number of elementary operations (or table entries).
    budget : float
        The limit that was exceeded.
    """

    def __init__(self, message, required=None, budget=None):
        super().__init__(message)
        self.required = required
        self.budget = budget
