"""Dense bounded-variable simplex.

Every row ``lo <= a.x <= hi`` gets a logical variable ``r = a.x`` carrying the
row bounds, so the working system is ``[A | -I] (x, r) = 0`` and all limits
live on variables. Nonbasic variables sit at a bound (or at zero when free).

Cold starts run a two-phase primal simplex with artificials only on rows whose
logical starts outside its bounds. Warm starts from a stored basis run the
dual simplex, which is what branch-and-bound children need after a bound
change, followed by a primal clean-up pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .model import MilpModel, Status

BASIC, AT_LOWER, AT_UPPER, FREE = 0, 1, 2, 3

PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
PRIMAL_TOL = 1e-9
DEGENERATE_STREAK = 40
REFACTOR_EVERY = 100
SPARSE_FROM = 120


@dataclass(frozen=True)
class Basis:
    """Basic column per row plus the nonbasic position of every column."""

    head: np.ndarray
    state: np.ndarray


@dataclass
class LpResult:
    status: Status
    x: np.ndarray
    objective: float
    basis: Optional[Basis] = None
    iterations: int = 0
    tableau: Optional[np.ndarray] = None


class LinearProgram:
    """Array form of a model: ``min c.x`` s.t. ``lo <= A x <= hi``, ``lb <= x <= ub``.

    Rows without coefficients are dropped here; an empty row whose bounds
    exclude zero makes the program trivially infeasible.
    """

    def __init__(self, c, A, row_lo, row_hi, lb, ub, offset: float = 0.0):
        A = np.asarray(A, dtype=float).reshape(len(row_lo), len(c))
        keep = np.any(A != 0.0, axis=1)
        row_lo = np.asarray(row_lo, dtype=float)
        row_hi = np.asarray(row_hi, dtype=float)
        self.trivially_infeasible = bool(np.any(
            (~keep) & ((row_lo > PRIMAL_TOL) | (row_hi < -PRIMAL_TOL))))
        self.c = np.asarray(c, dtype=float)
        self.A = A[keep]
        self.row_lo = row_lo[keep]
        self.row_hi = row_hi[keep]
        self.lb = np.asarray(lb, dtype=float)
        self.ub = np.asarray(ub, dtype=float)
        self.offset = float(offset)
        self.m, self.n = self.A.shape
        self.A_full = np.hstack([self.A, -np.eye(self.m)])
        self.cost_full = np.concatenate([self.c, np.zeros(self.m)])

    @classmethod
    def from_model(cls, model: MilpModel) -> "LinearProgram":
        A, lo, hi = model.constraint_matrix()
        lb, ub = model.bounds()
        return cls(model.objective_vector(), A, lo, hi, lb, ub,
                   model.objective_offset)

    def full_bounds(self, lb=None, ub=None):
        lb = self.lb if lb is None else lb
        ub = self.ub if ub is None else ub
        return (np.concatenate([lb, self.row_lo]),
                np.concatenate([ub, self.row_hi]))


class _Iterate:
    """Mutable tableau state shared by the primal and dual loops."""

    def __init__(self, A_full, cost, lb, ub, head, state, x, max_iter):
        self.A_full = A_full
        self.cost = cost
        self.lb = lb
        self.ub = ub
        self.head = head
        self.state = state
        self.x = x
        self.iterations = 0
        self.max_iter = max_iter
        self.since_refactor = 0
        self.T = None
        self.d = None

    # -- linear algebra ---------------------------------------------------------

    def _solve_basis(self, rhs):
        """``B^-1 rhs`` for the current basis; sparse LU pays off only on larger bases."""
        B = self.A_full[:, self.head]
        if len(self.head) < SPARSE_FROM:
            return np.linalg.solve(B, rhs)
        try:
            return splu(sp.csc_matrix(B)).solve(rhs)
        except RuntimeError as exc:  # exactly singular
            raise np.linalg.LinAlgError(str(exc)) from None

    def refactor(self):
        self.T = self._solve_basis(self.A_full)
        self.T[:, self.head] = np.eye(len(self.head))
        self.recompute_basics()
        self.recompute_duals()
        self.since_refactor = 0

    def recompute_basics(self):
        nonbasic = self.state != BASIC
        self.x[self.head] = -self.T[:, nonbasic] @ self.x[nonbasic]

    def recompute_duals(self):
        self.d = self.cost - self.cost[self.head] @ self.T
        self.d[self.head] = 0.0

    def pivot(self, r: int, q: int, leaving_value: float):
        """Swap column ``q`` into row ``r``; the old basic is parked at ``leaving_value``."""
        leaving = int(self.head[r])
        T = self.T
        row = T[r] / T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        rows = np.flatnonzero(col)
        if rows.size:
            T[rows] -= np.outer(col[rows], row)
        T[r] = row
        T[:, q] = 0.0
        T[r, q] = 1.0
        self.d -= self.d[q] * row
        self.d[q] = 0.0
        self.head[r] = q
        self.state[q] = BASIC
        self._park(leaving, leaving_value)
        self.iterations += 1
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.refactor()

    def _park(self, j: int, value: float):
        """Make column ``j`` nonbasic at ``value`` (one of its bounds)."""
        self.x[j] = value
        if self.lb[j] == self.ub[j] or value == self.lb[j]:
            self.state[j] = AT_LOWER
        elif value == self.ub[j]:
            self.state[j] = AT_UPPER
        else:
            self.state[j] = FREE

    # -- primal -----------------------------------------------------------------

    def primal(self) -> Status:
        bland = False
        streak = 0
        while True:
            if self.iterations >= self.max_iter:
                return Status.LIMIT_REACHED
            d, st = self.d, self.state
            movable = self.ub > self.lb
            up = ((st == AT_LOWER) & movable) | (st == FREE)
            down = ((st == AT_UPPER) & movable) | (st == FREE)
            score = np.where(up & (d < -OPT_TOL), -d, 0.0)
            score = np.maximum(score, np.where(down & (d > OPT_TOL), d, 0.0))
            candidates = np.flatnonzero(score > 0.0)
            if candidates.size == 0:
                return Status.OPTIMAL
            q = int(candidates[0]) if bland else int(candidates[np.argmax(score[candidates])])
            direction = 1.0 if d[q] < 0.0 else -1.0
            alpha = direction * self.T[:, q]
            xb = self.x[self.head]
            lbB, ubB = self.lb[self.head], self.ub[self.head]

            ratios = np.full(alpha.shape, math.inf)
            dec = (alpha > PIVOT_TOL) & np.isfinite(lbB)
            inc = (alpha < -PIVOT_TOL) & np.isfinite(ubB)
            ratios[dec] = (xb[dec] - lbB[dec]) / alpha[dec]
            ratios[inc] = (ubB[inc] - xb[inc]) / -alpha[inc]
            np.maximum(ratios, 0.0, out=ratios)
            theta_row = ratios.min() if ratios.size else math.inf
            theta_flip = self.ub[q] - self.lb[q]

            if not math.isfinite(theta_row) and not math.isfinite(theta_flip):
                return Status.UNBOUNDED

            if theta_flip <= theta_row:
                theta = theta_flip
                self.x[self.head] = xb - alpha * theta
                self._park(q, self.ub[q] if direction > 0 else self.lb[q])
                self.iterations += 1
            else:
                theta = theta_row
                ties = np.flatnonzero(ratios <= theta_row + 1e-12)
                if bland:
                    r = int(ties[np.argmin(self.head[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                leaving = int(self.head[r])
                hit = self.lb[leaving] if alpha[r] > 0 else self.ub[leaving]
                self.x[self.head] = xb - alpha * theta
                self.x[q] += direction * theta
                self.pivot(r, q, hit)
            if theta <= 1e-12:
                streak += 1
                if streak > DEGENERATE_STREAK:
                    bland = True
            else:
                streak = 0
                bland = False

    # -- dual -------------------------------------------------------------------

    def dual_feasible(self) -> bool:
        d, st = self.d, self.state
        movable = self.ub > self.lb
        bad = ((st == AT_LOWER) & movable & (d < -1e-7)) \
            | ((st == AT_UPPER) & movable & (d > 1e-7)) \
            | ((st == FREE) & (np.abs(d) > 1e-7))
        return not bool(np.any(bad))

    def dual(self, tol: float) -> Status:
        while True:
            if self.iterations >= self.max_iter:
                return Status.LIMIT_REACHED
            xb = self.x[self.head]
            lbB, ubB = self.lb[self.head], self.ub[self.head]
            below = lbB - xb
            above = xb - ubB
            worst = np.maximum(below, above)
            r = int(np.argmax(worst))
            if worst[r] <= tol:
                return Status.OPTIMAL
            row = self.T[r]
            st = self.state
            movable = self.ub > self.lb
            at_lo = (st == AT_LOWER) & movable
            at_up = (st == AT_UPPER) & movable
            free = st == FREE
            if below[r] > above[r]:
                target = lbB[r]
                eligible = (at_lo & (row < -PIVOT_TOL)) | (at_up & (row > PIVOT_TOL))
            else:
                target = ubB[r]
                eligible = (at_lo & (row > PIVOT_TOL)) | (at_up & (row < -PIVOT_TOL))
            eligible |= free & (np.abs(row) > PIVOT_TOL)
            cand = np.flatnonzero(eligible)
            if cand.size == 0:
                return Status.INFEASIBLE
            ratios = np.abs(self.d[cand]) / np.abs(row[cand])
            best = ratios.min()
            ties = cand[ratios <= best + 1e-12]
            q = int(ties[np.argmax(np.abs(row[ties]))])
            step = (xb[r] - target) / row[q]
            self.x[self.head] = xb - self.T[:, q] * step
            self.x[q] += step
            self.pivot(r, q, target)


def _cold_start(lp: LinearProgram, lb, ub, max_iter):
    """Phase one on artificials; returns an iterate primal feasible over ``[A | -I]``."""
    m, n = lp.m, lp.n
    lbf, ubf = lp.full_bounds(lb, ub)
    x = np.zeros(n + m)
    state = np.full(n + m, AT_LOWER, dtype=np.int8)
    for j in range(n):
        if math.isfinite(lbf[j]):
            x[j] = lbf[j]
        elif math.isfinite(ubf[j]):
            x[j], state[j] = ubf[j], AT_UPPER
        else:
            state[j] = FREE
    activity = lp.A @ x[:n]
    head = np.arange(n, n + m)
    x[head] = activity
    state[head] = BASIC

    low = activity < lbf[n:] - PRIMAL_TOL
    high = activity > ubf[n:] + PRIMAL_TOL
    bad = np.flatnonzero(low | high)
    k = bad.size
    A_aug = np.zeros((m, n + m + k))
    A_aug[:, :n + m] = lp.A_full
    lb_aug = np.concatenate([lbf, np.zeros(k)])
    ub_aug = np.concatenate([ubf, np.full(k, math.inf)])
    x = np.concatenate([x, np.zeros(k)])
    state = np.concatenate([state, np.full(k, BASIC, dtype=np.int8)])
    diag = -np.ones(m)
    for a, i in enumerate(bad):
        target = lbf[n + i] if low[i] else ubf[n + i]
        sign = 1.0 if target > activity[i] else -1.0
        A_aug[i, n + m + a] = sign
        diag[i] = sign
        x[n + m + a] = abs(target - activity[i])
        x[n + i] = target
        state[n + i] = AT_LOWER if low[i] else AT_UPPER
        if lbf[n + i] == ubf[n + i]:
            state[n + i] = AT_LOWER
        head[i] = n + m + a

    it = _Iterate(A_aug, np.zeros(n + m + k), lb_aug, ub_aug, head, state, x, max_iter)
    it.T = A_aug / diag[:, None]
    if k == 0:
        return it, Status.OPTIMAL

    it.cost = np.concatenate([np.zeros(n + m), np.ones(k)])
    it.recompute_duals()
    status = it.primal()
    if status is not Status.OPTIMAL:
        return it, status
    infeasibility = float(it.x[n + m:].sum())
    scale = max(1.0, float(np.max(np.abs(lp.row_lo[np.isfinite(lp.row_lo)]), initial=0.0)),
                float(np.max(np.abs(lp.row_hi[np.isfinite(lp.row_hi)]), initial=0.0)))
    if infeasibility > 1e-7 * scale:
        return it, Status.INFEASIBLE

    # Drive artificials out of the basis; [A | -I] has full row rank so a
    # non-artificial pivot always exists.
    for r in range(m):
        if it.head[r] >= n + m:
            row = np.abs(it.T[r, :n + m]).copy()
            row[it.head[it.head < n + m]] = 0.0
            q = int(np.argmax(row))
            it.pivot(r, q, 0.0)
    it.A_full = lp.A_full
    it.T = it.T[:, :n + m]
    it.x = it.x[:n + m]
    it.state = it.state[:n + m]
    it.lb, it.ub = lbf, ubf
    it.recompute_basics()
    return it, Status.OPTIMAL


def _finish(lp: LinearProgram, it: _Iterate, status: Status) -> LpResult:
    n = lp.n
    if status is not Status.OPTIMAL:
        x = it.x[:n].copy() if status is Status.LIMIT_REACHED else np.full(n, math.nan)
        return LpResult(status, x, math.nan, None, it.iterations)
    x = it.x[:n].copy()
    objective = float(lp.c @ x) + lp.offset
    return LpResult(status, x, objective,
                    Basis(it.head.copy(), it.state.copy()), it.iterations)


def solve_lp_arrays(lp: LinearProgram, lb=None, ub=None,
                    warm: Optional[Basis] = None,
                    max_iter: Optional[int] = None,
                    feasibility_tol: float = 1e-9,
                    tableau: Optional[np.ndarray] = None,
                    keep_tableau: bool = False) -> LpResult:
    """Solve the relaxation of ``lp`` with optional bound overrides.

    ``warm`` is a basis from an earlier solve of the same program (typically
    with looser bounds); the dual simplex restores primal feasibility from it.
    ``tableau`` may carry the matching ``B^-1 [A | -I]`` to skip the initial
    factorization; ``keep_tableau`` returns the final one on the result.
    """
    lb = lp.lb if lb is None else np.asarray(lb, dtype=float)
    ub = lp.ub if ub is None else np.asarray(ub, dtype=float)
    if lp.trivially_infeasible or np.any(lb > ub):
        return LpResult(Status.INFEASIBLE, np.full(lp.n, math.nan), math.nan)
    if max_iter is None:
        max_iter = 50 * (lp.m + lp.n) + 1000
    if lp.m == 0:
        return _solve_box(lp, lb, ub)

    if warm is not None:
        result = _warm_solve(lp, lb, ub, warm, max_iter, feasibility_tol, tableau, keep_tableau)
        if result is not None:
            return result

    it, status = _cold_start(lp, lb, ub, max_iter)
    if status is not Status.OPTIMAL:
        return _finish(lp, it, status)
    it.cost = lp.cost_full
    it.recompute_duals()
    status = it.primal()
    return _finish(lp, it, status)


def _warm_solve(lp, lb, ub, warm, max_iter, tol, tableau=None, keep_tableau=False):
    lbf, ubf = lp.full_bounds(lb, ub)
    state = warm.state.copy()
    x = np.zeros(lp.n + lp.m)
    for j in np.flatnonzero(state != BASIC):
        if state[j] == AT_UPPER and math.isfinite(ubf[j]):
            x[j] = ubf[j]
        elif math.isfinite(lbf[j]):
            x[j], state[j] = lbf[j], AT_LOWER
        elif math.isfinite(ubf[j]):
            x[j], state[j] = ubf[j], AT_UPPER
        else:
            state[j] = FREE
    it = _Iterate(lp.A_full, lp.cost_full, lbf, ubf, warm.head.copy(), state, x, max_iter)
    if tableau is not None:
        it.T = tableau.copy()
        it.recompute_basics()
        it.recompute_duals()
    else:
        try:
            it.refactor()
        except np.linalg.LinAlgError:
            return None
    if not it.dual_feasible():
        return None
    status = it.dual(tol)
    if status is Status.INFEASIBLE:
        # Confirm with a fresh factorization before trusting the verdict.
        it.refactor()
        status = it.dual(tol)
        if status is Status.INFEASIBLE:
            return LpResult(Status.INFEASIBLE, np.full(lp.n, math.nan), math.nan,
                            None, it.iterations)
    if status is not Status.OPTIMAL:
        return None
    status = it.primal()
    if status is not Status.OPTIMAL:
        return None
    # Fresh basic values from a new factorization guard against drift.
    nonbasic = it.state != BASIC
    try:
        it.x[it.head] = it._solve_basis(-(lp.A_full[:, nonbasic] @ it.x[nonbasic]))
    except np.linalg.LinAlgError:
        return None
    xb = it.x[it.head]
    if np.any(xb < it.lb[it.head] - 1e-7) or np.any(xb > it.ub[it.head] + 1e-7):
        return None
    result = _finish(lp, it, status)
    if keep_tableau:
        result.tableau = it.T
    return result


def _solve_box(lp, lb, ub) -> LpResult:
    x = np.zeros(lp.n)
    for j, cj in enumerate(lp.c):
        if cj > 0:
            x[j] = lb[j]
        elif cj < 0:
            x[j] = ub[j]
        else:
            x[j] = lb[j] if math.isfinite(lb[j]) else (ub[j] if math.isfinite(ub[j]) else 0.0)
        if not math.isfinite(x[j]):
            return LpResult(Status.UNBOUNDED, np.full(lp.n, math.nan), math.nan)
    return LpResult(Status.OPTIMAL, x, float(lp.c @ x) + lp.offset)
