"""Best-first branch-and-bound over LP relaxations for binary variables."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .model import MilpModel, MilpSolution, SolveOptions, Status
from .simplex import Basis, LinearProgram, LpResult, solve_lp_arrays

HEURISTIC_EVERY = 50
# Reused tableaus drift; refactor after this many inherited solves.
TABLEAU_REUSE = 20


def solve_lp(model: MilpModel, options: Optional[SolveOptions] = None) -> MilpSolution:
    """Solve ``model`` ignoring integrality marks."""
    start = time.perf_counter()
    lp = LinearProgram.from_model(model)
    res = solve_lp_arrays(lp)
    return _to_solution(res, start, nodes=0)


def _to_solution(res: LpResult, start: float, nodes: int) -> MilpSolution:
    bound = res.objective if res.status is Status.OPTIMAL else -math.inf
    return MilpSolution(res.status, res.x, res.objective, gap=0.0, bound=bound,
                        nodes=nodes, elapsed=time.perf_counter() - start,
                        iterations=res.iterations)


@dataclass
class _Node:
    bound: float
    depth: int
    fixings: Dict[int, Tuple[float, float]]
    warm: Optional[Basis]
    parent: int


class BranchAndBound:
    """One solve of a binary MILP.

    Nodes are expanded best-first by their parent's relaxation bound; among
    equal bounds the most recently created node goes first, which makes the
    search dive. The branching variable is the most fractional binary, lowest
    id on ties.
    """

    def __init__(self, model: MilpModel, options: SolveOptions, start=None):
        self.model = model
        self.options = options
        self.lp = LinearProgram.from_model(model)
        self.lb0, self.ub0 = model.bounds()
        self.integral = np.array(model.integral_indices, dtype=int)
        self.incumbent: Optional[np.ndarray] = None
        self.incumbent_obj = math.inf
        self.nodes = 0
        self.iterations = 0
        # (node number, tableau, reuse age) of the last solved node
        self._cache = None
        if start is not None:
            self._accept_start(np.asarray(start, dtype=float))

    def _accept_start(self, x: np.ndarray):
        """Take a caller-supplied point as the first incumbent if it is feasible."""
        if x.shape != (self.model.num_variables,) or not np.all(np.isfinite(x)):
            return
        if self.model.violations(x, self.options.feasibility_tol, self.options.integrality_tol):
            return
        self._try_incumbent(x, self.model.evaluate(x))

    def _bounds(self, fixings):
        lb, ub = self.lb0.copy(), self.ub0.copy()
        for vid, (lo, hi) in fixings.items():
            lb[vid], ub[vid] = lo, hi
        return lb, ub

    def _relax(self, fixings, warm, tableau=None, keep=False) -> LpResult:
        lb, ub = self._bounds(fixings)
        res = solve_lp_arrays(self.lp, lb, ub, warm=warm, tableau=tableau, keep_tableau=keep)
        self.iterations += res.iterations
        return res

    def _relax_node(self, node: "_Node") -> LpResult:
        tableau, age = None, 0
        if self._cache is not None and self._cache[0] == node.parent and node.warm is not None:
            _, tableau, age = self._cache
            if age >= TABLEAU_REUSE:
                tableau, age = None, 0
        res = self._relax(node.fixings, node.warm, tableau, keep=True)
        self._cache = None
        if res.tableau is not None:
            self._cache = (self.nodes, res.tableau, age + 1 if tableau is not None else 1)
            res.tableau = None
        return res

    def _fractionality(self, x: np.ndarray) -> np.ndarray:
        vals = x[self.integral]
        return np.abs(vals - np.round(vals))

    def _prune_level(self) -> float:
        if self.incumbent is None:
            return math.inf
        return self.incumbent_obj - self.options.gap * max(1.0, abs(self.incumbent_obj))

    def _try_incumbent(self, x: np.ndarray, objective: float):
        if objective < self.incumbent_obj:
            self.incumbent = x.copy()
            self.incumbent_obj = objective

    def _rounding(self, res: LpResult, fixings):
        """Fix every binary at its rounded value and re-solve the continuous part."""
        vals = np.round(res.x[self.integral])
        fixed = dict(fixings)
        fixed.update({int(v): (float(r), float(r)) for v, r in zip(self.integral, vals)})
        trial = self._relax(fixed, res.basis)
        if trial.status is Status.OPTIMAL:
            self._try_incumbent(trial.x, trial.objective)

    def _dive(self, res: LpResult, fixings):
        """Fractional diving: fix near-integral binaries, round the least fractional one.

        Each step re-solves from the previous basis; an infeasible rounding is
        flipped once before the dive gives up.
        """
        fixed = dict(fixings)
        tol = self.options.integrality_tol
        tableau = None
        for _ in range(len(self.integral) + 1):
            if res.objective >= self._prune_level():
                return
            vals = res.x[self.integral]
            frac = np.abs(vals - np.round(vals))
            if frac.max() <= tol:
                self._try_incumbent(res.x, res.objective)
                return
            for v, val, f in zip(self.integral, vals, frac):
                if f <= tol and int(v) not in fixed:
                    fixed[int(v)] = (float(round(val)),) * 2
            open_frac = np.where(frac > tol, frac, np.inf)
            pick = int(np.argmin(open_frac))
            vid = int(self.integral[pick])
            target = float(round(vals[pick]))
            trial = None
            for value in (target, 1.0 - target):
                fixed[vid] = (value, value)
                trial = self._relax(fixed, res.basis, tableau, keep=True)
                if trial.status is Status.OPTIMAL:
                    break
                tableau = None
            if trial is None or trial.status is not Status.OPTIMAL:
                return
            tableau, trial.tableau = trial.tableau, None
            res = trial

    def run(self) -> MilpSolution:
        start = time.perf_counter()
        opts = self.options
        root = self._relax({}, None)
        if root.status is not Status.OPTIMAL:
            return _to_solution(root, start, nodes=1)

        counter = itertools.count()
        heap = []
        heapq.heappush(heap, (root.objective, -next(counter),
                              _Node(root.objective, 0, {}, None, -1)))
        limit_hit = False

        while heap:
            key, _, node = heap[0]
            if key >= self._prune_level():
                break
            if opts.node_limit is not None and self.nodes >= opts.node_limit:
                limit_hit = True
                break
            if opts.time_limit is not None and time.perf_counter() - start > opts.time_limit:
                limit_hit = True
                break
            heapq.heappop(heap)
            self.nodes += 1

            if self.nodes == 1:
                res = root
            else:
                res = self._relax_node(node)
            if res.status is Status.LIMIT_REACHED:
                # Relaxation iteration cap: fall back to a cold solve once.
                lb, ub = self._bounds(node.fixings)
                res = solve_lp_arrays(self.lp, lb, ub, max_iter=10 * (self.lp.m + self.lp.n) * 50)
            if res.status is not Status.OPTIMAL:
                continue
            if res.objective >= self._prune_level():
                continue

            frac = self._fractionality(res.x)
            if frac.size == 0 or frac.max() <= opts.integrality_tol:
                self._try_incumbent(res.x, res.objective)
                continue

            if self.nodes == 1 or self.nodes % HEURISTIC_EVERY == 0:
                self._rounding(res, node.fixings)
                self._dive(res, node.fixings)
                self._cache = None
                if res.objective >= self._prune_level():
                    continue

            score = np.minimum(frac, 1.0 - frac)
            pick = int(np.argmax(score))
            vid = int(self.integral[pick])
            value = res.x[vid]
            down = dict(node.fixings)
            down[vid] = (self.lb0[vid], float(math.floor(value)))
            up = dict(node.fixings)
            up[vid] = (float(math.ceil(value)), self.ub0[vid])
            children = [down, up] if value - math.floor(value) >= 0.5 else [up, down]
            # The child pushed last is explored first among equal keys.
            for fix in children:
                heapq.heappush(heap, (res.objective, -next(counter),
                                      _Node(res.objective, node.depth + 1, fix,
                                            res.basis, self.nodes)))

        elapsed = time.perf_counter() - start
        best_bound = min(self.incumbent_obj, heap[0][0]) if heap else self.incumbent_obj

        if self.incumbent is None:
            status = Status.LIMIT_REACHED if limit_hit else Status.INFEASIBLE
            n = self.model.num_variables
            return MilpSolution(status, np.full(n, math.nan), math.nan, math.inf,
                                best_bound if limit_hit else math.inf, self.nodes,
                                elapsed, self.iterations)

        values, objective = self._polish(self.incumbent, self.incumbent_obj)
        gap = max(0.0, (objective - best_bound) / max(1.0, abs(objective)))
        status = Status.LIMIT_REACHED if limit_hit and gap > opts.gap else Status.OPTIMAL
        return MilpSolution(status, values, objective, gap, best_bound, self.nodes,
                            time.perf_counter() - start, self.iterations)

    def _polish(self, x, objective):
        """Snap binaries to exact integers and re-solve the continuous part."""
        vals = np.round(x[self.integral])
        fixings = {int(v): (float(r), float(r)) for v, r in zip(self.integral, vals)}
        res = self._relax(fixings, None)
        if res.status is Status.OPTIMAL and res.objective <= objective + 1e-7 * max(1.0, abs(objective)):
            out = res.x.copy()
            out[self.integral] = vals
            return out, res.objective
        out = x.copy()
        out[self.integral] = vals
        return out, objective


def solve(model: MilpModel, options: Optional[SolveOptions] = None,
          start=None) -> MilpSolution:
    """Solve ``model`` to the relative gap in ``options``.

    A model without integral variables is handed straight to the simplex.
    ``start`` is an optional feasible point used as the first incumbent; it
    is silently ignored when it violates the model.
    ``Status.LIMIT_REACHED`` solutions carry the best incumbent, if any.
    """
    options = options or SolveOptions()
    if not model.integral_indices:
        return solve_lp(model, options)
    return BranchAndBound(model, options, start).run()
