class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class InfeasibleError(RuntimeError):
    """Raised when the scheduling model admits no feasible schedule.

    ``requirement`` names the class of requirement that could not be met.
    """

    def __init__(self, message: str, requirement: str = "unknown"):
        super().__init__(message)
        self.requirement = requirement


class NotFittedError(AttributeError):
    pass


class SolverLimitError(RuntimeError):
    """Node or time limits stopped the search before any feasible point."""
