"""Small mixed-integer linear programming toolkit."""

from .bnb import BranchAndBound, solve, solve_lp
from .lpfile import write_lp
from .model import (Constraint, MilpModel, MilpSolution, Sense, SolveOptions,
                    Status, Variable)

__all__ = [
    "BranchAndBound", "Constraint", "MilpModel", "MilpSolution", "Sense",
    "SolveOptions", "Status", "Variable", "solve", "solve_lp", "write_lp",
]
