"""Linear model container with integrality marks.

Variables are referenced by the integer id returned from
:meth:`MilpModel.add_variable`. Constraints and the objective are stored
sparsely as ``{variable id: coefficient}`` mappings and are only densified
when a solver asks for arrays.
"""

from __future__ import annotations

import copy
import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ValidationError


class Sense(str, enum.Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    LIMIT_REACHED = "LimitReached"


@dataclass(frozen=True)
class Variable:
    lower: float
    upper: float
    integral: bool
    name: str


@dataclass(frozen=True)
class Constraint:
    indices: Tuple[int, ...]
    coefs: Tuple[float, ...]
    sense: Sense
    rhs: float
    name: str


@dataclass(frozen=True)
class SolveOptions:
    """Tolerances and limits for :func:`pvcharge.milp.solve`.

    ``node_limit`` and ``time_limit`` of ``None`` mean unlimited.
    """

    feasibility_tol: float = 1e-6
    integrality_tol: float = 1e-6
    gap: float = 1e-6
    node_limit: Optional[int] = None
    time_limit: Optional[float] = None

    def __post_init__(self):
        for name in ("feasibility_tol", "integrality_tol", "gap"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        if self.node_limit is not None and self.node_limit < 1:
            raise ValidationError("node_limit must be >= 1")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValidationError("time_limit must be > 0")


@dataclass
class MilpSolution:
    status: Status
    values: np.ndarray
    objective: float
    gap: float = 0.0
    bound: float = -math.inf
    nodes: int = 0
    elapsed: float = 0.0
    iterations: int = 0

    @property
    def has_values(self) -> bool:
        return self.values.size > 0 and np.all(np.isfinite(self.values))


class MilpModel:
    """Minimization model ``min c.x + offset`` over linear rows and bounds."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self._objective: Dict[int, float] = {}
        self.objective_offset = 0.0

    # -- construction -------------------------------------------------------

    def add_variable(self, lower: float = 0.0, upper: float = math.inf,
                     integral: bool = False, name: Optional[str] = None) -> int:
        lower, upper = float(lower), float(upper)
        if math.isnan(lower) or math.isnan(upper):
            raise ValidationError("variable bounds must not be NaN")
        if lower > upper:
            raise ValidationError(
                f"inverted bounds for {name or 'variable'}: {lower} > {upper}")
        if integral and (lower < 0.0 or upper > 1.0):
            raise ValidationError(
                "integral variables must be binary with bounds within [0, 1]")
        vid = len(self.variables)
        self.variables.append(
            Variable(lower, upper, bool(integral), name or f"x{vid}"))
        return vid

    def add_binary(self, name: Optional[str] = None) -> int:
        return self.add_variable(0.0, 1.0, integral=True, name=name)

    def add_constraint(self, coefs: Mapping[int, float], sense, rhs: float,
                       name: Optional[str] = None) -> int:
        sense = Sense(sense)
        merged: Dict[int, float] = {}
        for vid, value in coefs.items():
            self._check_var(vid)
            merged[vid] = merged.get(vid, 0.0) + float(value)
        items = sorted((v, c) for v, c in merged.items() if c != 0.0)
        cid = len(self.constraints)
        self.constraints.append(Constraint(
            tuple(v for v, _ in items), tuple(c for _, c in items), sense,
            float(rhs), name or f"r{cid}"))
        return cid

    def set_objective(self, coefs: Mapping[int, float], offset: float = 0.0):
        objective: Dict[int, float] = {}
        for vid, value in coefs.items():
            self._check_var(vid)
            objective[vid] = objective.get(vid, 0.0) + float(value)
        self._objective = objective
        self.objective_offset = float(offset)

    def _check_var(self, vid: int):
        if not (isinstance(vid, (int, np.integer)) and 0 <= vid < len(self.variables)):
            raise ValidationError(f"unknown variable id {vid!r}")

    # -- views ----------------------------------------------------------------

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def objective(self) -> Dict[int, float]:
        return dict(self._objective)

    @property
    def integral_indices(self) -> List[int]:
        return [i for i, v in enumerate(self.variables) if v.integral]

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lower for v in self.variables], dtype=float)
        ub = np.array([v.upper for v in self.variables], dtype=float)
        return lb, ub

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.num_variables)
        for vid, value in self._objective.items():
            c[vid] = value
        return c

    def constraint_matrix(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense ``(A, row_lower, row_upper)`` with ``row_lower <= A x <= row_upper``."""
        m, n = self.num_constraints, self.num_variables
        A = np.zeros((m, n))
        lo = np.full(m, -math.inf)
        hi = np.full(m, math.inf)
        for i, con in enumerate(self.constraints):
            if con.indices:
                A[i, list(con.indices)] = con.coefs
            if con.sense is not Sense.GE:
                hi[i] = con.rhs
            if con.sense is not Sense.LE:
                lo[i] = con.rhs
        return A, lo, hi

    def evaluate(self, values: Sequence[float]) -> float:
        x = np.asarray(values, dtype=float)
        return float(sum(c * x[v] for v, c in self._objective.items())
                     + self.objective_offset)

    def with_bounds(self, overrides: Mapping[int, Tuple[float, float]]) -> "MilpModel":
        """Copy of the model with some variable bounds replaced."""
        clone = copy.copy(self)
        clone.variables = list(self.variables)
        clone.constraints = list(self.constraints)
        clone._objective = dict(self._objective)
        for vid, (lo, hi) in overrides.items():
            self._check_var(vid)
            old = clone.variables[vid]
            if lo > hi:
                raise ValidationError(f"inverted bounds for {old.name}")
            clone.variables[vid] = Variable(float(lo), float(hi), old.integral, old.name)
        return clone

    def relaxed(self) -> "MilpModel":
        clone = self.with_bounds({})
        clone.variables = [Variable(v.lower, v.upper, False, v.name)
                           for v in clone.variables]
        return clone

    def violations(self, values: Sequence[float], tol: float = 1e-6,
                   integrality_tol: Optional[float] = None) -> List[Tuple[str, float]]:
        """Scan ``values`` for bound, row and integrality violations.

        Row violations are measured relative to ``max(1, |rhs|)``. Returns
        ``(name, amount)`` pairs; an empty list means feasible.
        """
        x = np.asarray(values, dtype=float)
        out: List[Tuple[str, float]] = []
        if x.shape != (self.num_variables,):
            return [("shape", float("inf"))]
        for i, var in enumerate(self.variables):
            if x[i] < var.lower - tol:
                out.append((f"{var.name} lower", var.lower - x[i]))
            if x[i] > var.upper + tol:
                out.append((f"{var.name} upper", x[i] - var.upper))
            if var.integral and integrality_tol is not None:
                frac = abs(x[i] - round(x[i]))
                if frac > integrality_tol:
                    out.append((f"{var.name} integrality", frac))
        for con in self.constraints:
            act = sum(c * x[v] for v, c in zip(con.indices, con.coefs))
            scale = max(1.0, abs(con.rhs))
            if con.sense is Sense.LE:
                excess = act - con.rhs
            elif con.sense is Sense.GE:
                excess = con.rhs - act
            else:
                excess = abs(act - con.rhs)
            if excess > tol * scale:
                out.append((con.name, excess))
        return out
