"""Price decomposition of the station model: a lower bound plus good schedules.

The grid cost of a slot, ``sell * import - buy * export``, is bounded below
by ``lam * net`` for any ``lam`` between the buy and sell price, where
``net`` is the energy the station must source. Pricing energy at ``lam``
therefore splits the station model into one small MILP per green EV, and
the sum of their optimal values (plus the priced fixed load) is a valid
lower bound on the station cost.

Schedules come from fixing the EV modes found by the subproblems and
re-solving the continuous part of the full model, then from re-optimizing
one EV's modes at a time in the full model with the others held fixed.
Multipliers are improved with projected subgradient steps.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Dict, Optional

import numpy as np

from . import milp
from .fleet import EvClass
from .milp import MilpModel, MilpSolution, SolveOptions, Status

logger = logging.getLogger(__name__)

MAX_ROUNDS = 12
STALL_ROUNDS = 3
MIN_STEP = 1e-3
POLISH_SWEEPS = 6
SUB_NODES = 500
MOVE_NODES = 500
SETTLE_TOL = 1e-9


@dataclass
class _Incumbent:
    values: Optional[np.ndarray] = None
    objective: float = math.inf

    def offer(self, values, objective) -> bool:
        if values is not None and objective < self.objective - 1e-9 * max(1.0, abs(objective)):
            self.values, self.objective = values, objective
            return True
        return False


class _EvSubproblem:
    """One green EV priced against ``lam``: its own SOC, floor and mode rows only."""

    def __init__(self, ev, mu, charge_price, discharge_price, add_green_ev):
        self.ev = ev
        self.model = MilpModel(f"ev_{ev.id}")
        self.vars = add_green_ev(self.model, ev, mu)
        self.slots = self.vars.slots
        self.pc = charge_price
        self.pd = discharge_price
        self.add_green_ev = add_green_ev
        self._cache: Dict[tuple, MilpSolution] = {}
        self._last: Optional[np.ndarray] = None

    def solve(self, lam: np.ndarray, options: SolveOptions) -> MilpSolution:
        key = tuple(np.round(lam[[t - 1 for t in self.slots]], 12))
        if key not in self._cache:
            objective = {}
            for t in self.slots:
                objective[self.vars.charge[t]] = lam[t - 1] - self.pc[t - 1]
                objective[self.vars.discharge[t]] = self.pd[t - 1] - lam[t - 1]
            self.model.set_objective(objective)
            sol = milp.solve(self.model, options, start=self._last)
            if sol.has_values:
                self._last = sol.values
            self._cache[key] = sol
        return self._cache[key]

    def add_net(self, sol: MilpSolution, net: np.ndarray):
        for t in self.slots:
            net[t - 1] += sol.values[self.vars.charge[t]] - sol.values[self.vars.discharge[t]]


class StationSolver:
    """Decomposition bound, schedule construction and polishing for one station model."""

    def __init__(self, scenario, model: MilpModel, vmap, fixed_demand, generation,
                 charge_price, discharge_price, add_green_ev, options: SolveOptions):
        self.scenario = scenario
        self.model = model
        self.vmap = vmap
        self.options = options
        self.sell = scenario.prices.sell
        self.buy = scenario.prices.buy
        self.base_net = np.asarray(fixed_demand, dtype=float) - np.asarray(generation, dtype=float)
        self.subs = [_EvSubproblem(ev, scenario.battery_efficiency, charge_price,
                                   discharge_price, add_green_ev)
                     for ev in scenario.evs(EvClass.GREEN)]
        # Node-capped subproblems still return a valid bound, so rounds stay cheap.
        self.sub_options = SolveOptions(options.feasibility_tol, options.integrality_tol,
                                        gap=1e-9, node_limit=SUB_NODES)
        self.best = _Incumbent()
        self.bound = -math.inf
        self.nodes = 0
        self.start = time.perf_counter()

    # -- helpers -----------------------------------------------------------------

    def _out_of_time(self) -> bool:
        limit = self.options.time_limit
        return limit is not None and time.perf_counter() - self.start > limit

    def _closed(self) -> bool:
        if self.best.values is None:
            return False
        return self.best.objective - self.bound <= self.options.gap * max(1.0, abs(self.best.objective))

    def _mode_fixings(self, values, skip: Optional[str] = None) -> Dict[int, tuple]:
        out = {}
        for ev_id, gv in self.vmap.green.items():
            if ev_id == skip:
                continue
            for t in gv.slots:
                y = float(round(values[gv.mode[t]]))
                out[gv.mode[t]] = (y, y)
        return out

    def settle_grid(self, values: np.ndarray) -> np.ndarray:
        """Net out simultaneous grid flows and set each direction binary from the flows.

        Netting never raises cost since the buy price is at most the sell price.
        """
        x = values.copy()
        for imp, exp, mode in zip(self.vmap.grid_import, self.vmap.grid_export, self.vmap.grid_mode):
            both = min(x[imp], x[exp])
            if both > 0:
                x[imp] -= both
                x[exp] -= both
            x[imp] = 0.0 if x[imp] < SETTLE_TOL else x[imp]
            x[exp] = 0.0 if x[exp] < SETTLE_TOL else x[exp]
            x[mode] = 1.0 if x[exp] > 0 else 0.0
        return x

    def complete(self, fixings) -> Optional[np.ndarray]:
        """Optimize the continuous part with the given modes fixed; grid modes follow the flows."""
        fixed = self.model.with_bounds(fixings).relaxed()
        res = milp.solve_lp(fixed)
        if res.status is not Status.OPTIMAL:
            return None
        x = self.settle_grid(res.values)
        for vid, (lo, _) in fixings.items():
            x[vid] = lo
        if self.model.violations(x, self.options.feasibility_tol, self.options.integrality_tol):
            return None
        return x

    # -- phases ------------------------------------------------------------------

    def initial_prices(self) -> np.ndarray:
        root = milp.solve_lp(self.model.relaxed())
        net = self.base_net.copy()
        if root.status is Status.OPTIMAL:
            for g in self.vmap.green.values():
                for t in g.slots:
                    net[t - 1] += root.values[g.charge[t]] - root.values[g.discharge[t]]
        return np.where(net > SETTLE_TOL, self.sell,
                        np.where(net < -SETTLE_TOL, self.buy, (self.sell + self.buy) / 2))

    def price_rounds(self):
        lam = self.initial_prices()
        stall, step = 0, 1.0
        tried = set()
        for rnd in range(MAX_ROUNDS):
            sols = [sub.solve(lam, self.sub_options) for sub in self.subs]
            if not all(s.has_values and math.isfinite(s.bound) for s in sols):
                logger.debug("subproblem without a solution; stopping price rounds")
                return
            self.nodes += sum(s.nodes for s in sols)
            net = self.base_net.copy()
            for sub, s in zip(self.subs, sols):
                sub.add_net(s, net)
            bound = float(lam @ self.base_net) + sum(s.bound for s in sols) \
                + self.model.objective_offset
            logger.debug("round %d: bound %.6f best %.6f step %.4g", rnd, bound,
                         self.best.objective, step)
            if bound > self.bound + 1e-9 * max(1.0, abs(bound)):
                self.bound, stall = bound, 0
            else:
                stall += 1
                if stall >= STALL_ROUNDS:
                    step, stall = step / 2, 0

            fixings = {}
            for sub, s in zip(self.subs, sols):
                gv = self.vmap.green[sub.ev.id]
                for t in sub.slots:
                    y = float(round(s.values[sub.vars.mode[t]]))
                    fixings[gv.mode[t]] = (y, y)
            key = tuple(sorted(fixings.items()))
            if key not in tried:
                tried.add(key)
                x = self.complete(fixings)
                if x is not None:
                    self.best.offer(x, self.model.evaluate(x))

            if self._closed() or self._out_of_time():
                return
            norm = float(net @ net)
            if norm <= 1e-18 or step < MIN_STEP:
                return
            target = self.best.objective if self.best.values is not None \
                else bound + 0.01 * max(1.0, abs(bound))
            lam = np.clip(lam + step * (target - bound) / norm * net, self.buy, self.sell)

    def _net_of(self, values, skip: Optional[str] = None) -> np.ndarray:
        net = self.base_net.copy()
        for ev_id, gv in self.vmap.green.items():
            if ev_id == skip:
                continue
            for t in gv.slots:
                net[t - 1] += values[gv.charge[t]] - values[gv.discharge[t]]
        return net

    def _local_move(self, sub: "_EvSubproblem", residual: np.ndarray) -> Optional[Dict[int, float]]:
        """Best schedule for one EV against the others' fixed net flow.

        The grid cost of a slot is ``buy * net + (sell - buy) * max(net, 0)``,
        which is convex, so one extra variable per slot models it exactly.
        """
        model = MilpModel(f"move_{sub.ev.id}")
        gv = sub.add_green_ev(model, sub.ev, self.scenario.battery_efficiency)
        gmax = self.scenario.grid_max_kwh_per_slot
        objective, excess_of = {}, {}
        for t in gv.slots:
            i = t - 1
            c, d = gv.charge[t], gv.discharge[t]
            excess = excess_of[t] = model.add_variable(0.0, math.inf, name=f"p_{t}")
            objective[c] = self.buy[i] - sub.pc[i]
            objective[d] = sub.pd[i] - self.buy[i]
            objective[excess] = self.sell[i] - self.buy[i]
            model.add_constraint({excess: 1.0, c: -1.0, d: 1.0}, ">=", residual[i])
            model.add_constraint({c: 1.0, d: -1.0}, "<=", gmax - residual[i])
            model.add_constraint({c: 1.0, d: -1.0}, ">=", -gmax - residual[i])
        model.set_objective(objective)
        start = np.zeros(model.num_variables)
        src = self.vmap.green[sub.ev.id]
        for t in gv.slots:
            for a, b in ((gv.charge, src.charge), (gv.discharge, src.discharge),
                         (gv.mode, src.mode), (gv.soc, src.soc)):
                start[a[t]] = self.best.values[b[t]]
            start[excess_of[t]] = max(
                0.0, residual[t - 1] + start[gv.charge[t]] - start[gv.discharge[t]])
        opts = SolveOptions(self.options.feasibility_tol, self.options.integrality_tol,
                            gap=1e-9, node_limit=MOVE_NODES)
        sol = milp.solve(model, opts, start=start)
        self.nodes += sol.nodes
        if not sol.has_values:
            return None
        return {t: float(round(sol.values[gv.mode[t]])) for t in gv.slots}

    def polish(self):
        """Re-optimize one EV at a time against the others' flows, then re-settle all flows."""
        if self.best.values is None:
            return
        for sweep in range(POLISH_SWEEPS):
            improved = False
            for sub in self.subs:
                if self._closed() or self._out_of_time():
                    return
                ev_id = sub.ev.id
                move = self._local_move(sub, self._net_of(self.best.values, skip=ev_id))
                if move is None:
                    continue
                gv = self.vmap.green[ev_id]
                if all(move[t] == round(self.best.values[gv.mode[t]]) for t in gv.slots):
                    continue
                fixings = self._mode_fixings(self.best.values, skip=ev_id)
                for t in gv.slots:
                    fixings[gv.mode[t]] = (move[t], move[t])
                x = self.complete(fixings)
                if x is not None:
                    gained = self.best.offer(x, self.model.evaluate(x))
                    improved |= gained
                    logger.debug("polish %d %s: %.6f%s", sweep, ev_id, self.best.objective,
                                 " (improved)" if gained else "")
            if not improved:
                return

    def run(self) -> MilpSolution:
        self.price_rounds()
        self.polish()
        if not self._closed() and not self._out_of_time():
            # Branch-and-bound on the full model from the incumbent, within the node limit.
            limit = None
            if self.options.time_limit is not None:
                limit = max(1e-3, self.options.time_limit - (time.perf_counter() - self.start))
            sol = milp.solve(self.model, replace(self.options, time_limit=limit),
                             start=self.best.values)
            self.nodes += sol.nodes
            if sol.has_values:
                self.best.offer(sol.values, sol.objective)
            if sol.status is Status.INFEASIBLE and self.best.values is None:
                return MilpSolution(Status.INFEASIBLE, np.full(self.model.num_variables, math.nan),
                                    math.nan, math.inf, math.inf, self.nodes,
                                    time.perf_counter() - self.start)
            if sol.status is Status.OPTIMAL:
                self.bound = max(self.bound, min(sol.bound, sol.objective))
            elif math.isfinite(sol.bound):
                self.bound = max(self.bound, sol.bound)
        elapsed = time.perf_counter() - self.start
        if self.best.values is None:
            return MilpSolution(Status.LIMIT_REACHED, np.full(self.model.num_variables, math.nan),
                                math.nan, math.inf, self.bound, self.nodes, elapsed)
        obj = self.best.objective
        gap = max(0.0, (obj - self.bound) / max(1.0, abs(obj)))
        status = Status.OPTIMAL if gap <= self.options.gap else Status.LIMIT_REACHED
        return MilpSolution(status, self.best.values, obj, gap, self.bound, self.nodes, elapsed)
