"""Station trading schedule as a binary MILP, plus an independent checker.

Decision variables exist only for green EVs (charge, discharge, mode and SOC
on each slot of their stay) and for the grid link (import, export, direction
per slot). Premium and conservative charging is fixed beforehand by
:mod:`pvcharge.fleet`; their revenue enters the objective as a constant.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator

from . import milp
from .exceptions import InfeasibleError, NotFittedError, SolverLimitError, ValidationError
from .fleet import EvClass, FixedLoadProfile, build_fixed_load
from .decomposition import StationSolver
from .milp import MilpModel, SolveOptions, Status
from .pv import station_generation
from .scenario import Scenario
from .tariff import EPSILON_CONVERGENCE_THRESHOLD, green_prices, premium_prices

logger = logging.getLogger(__name__)


# The embedded solver has no cutting planes, so the last fraction of a
# percent of the integrality gap is out of reach; see the decomposition module.
DEFAULT_OPTIONS = SolveOptions(gap=1e-3, node_limit=500)


class SlowConvergenceWarning(UserWarning):
    """The green discharge factor is in the range where the MIP closes slowly."""


@dataclass
class GreenVars:
    slots: List[int]
    charge: Dict[int, int] = field(default_factory=dict)
    discharge: Dict[int, int] = field(default_factory=dict)
    mode: Dict[int, int] = field(default_factory=dict)
    soc: Dict[int, int] = field(default_factory=dict)
    terminal_target: float = 0.0


@dataclass
class VariableMap:
    grid_import: List[int]
    grid_export: List[int]
    grid_mode: List[int]
    green: Dict[str, GreenVars]


@dataclass(frozen=True)
class CostBreakdown:
    """Terms of the station's daily cost, cents. Costs are positive, revenues subtracted."""

    green_discharge_payments: float = 0.0
    grid_purchases: float = 0.0
    green_charging_revenue: float = 0.0
    premium_charging_revenue: float = 0.0
    conservative_charging_revenue: float = 0.0
    grid_sales_revenue: float = 0.0

    @property
    def total(self) -> float:
        return (self.green_discharge_payments + self.grid_purchases
                - self.green_charging_revenue - self.premium_charging_revenue
                - self.conservative_charging_revenue - self.grid_sales_revenue)


@dataclass
class Schedule:
    """Optimized flows over the time grid (list index 0 is slot 1).

    ``grid_import_kwh`` is energy bought from the grid, ``grid_export_kwh``
    energy sold to it; ``grid_mode`` is 1 when energy flows into the grid.
    Green ``mode`` is 1 for charging and 0 for discharging, ``None`` outside
    the stay.
    """

    status: str
    generation_kwh: List[float]
    grid_import_kwh: List[float]
    grid_export_kwh: List[float]
    grid_mode: List[int]
    ev_class: Dict[str, str]
    charge_kwh: Dict[str, List[float]]
    discharge_kwh: Dict[str, List[float]]
    mode: Dict[str, List[Optional[int]]]
    soc_kwh: Dict[str, List[float]]
    gamma_cents: float
    breakdown: CostBreakdown
    gap: float = 0.0
    nodes: int = 0
    elapsed_s: float = 0.0
    warnings: List[str] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL.value

    @property
    def slot_count(self) -> int:
        return len(self.grid_import_kwh)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "status": self.status,
            "gamma_cents": self.gamma_cents,
            "breakdown": {k: getattr(self.breakdown, k) for k in CostBreakdown.__dataclass_fields__},
            "gap": self.gap,
            "nodes": self.nodes,
            "generation_kwh": self.generation_kwh,
            "grid_import_kwh": self.grid_import_kwh,
            "grid_export_kwh": self.grid_export_kwh,
            "grid_mode": self.grid_mode,
            "evs": [{
                "id": ev_id, "class": self.ev_class[ev_id],
                "charge_kwh": self.charge_kwh[ev_id],
                "discharge_kwh": self.discharge_kwh[ev_id],
                "mode": self.mode[ev_id],
                "soc_kwh": self.soc_kwh[ev_id],
            } for ev_id in self.ev_class],
            "warnings": self.warnings,
        }
        if include_timing:
            out["elapsed_s"] = self.elapsed_s
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "Schedule":
        try:
            evs = doc["evs"]
            return cls(
                status=doc["status"],
                generation_kwh=list(doc["generation_kwh"]),
                grid_import_kwh=list(doc["grid_import_kwh"]),
                grid_export_kwh=list(doc["grid_export_kwh"]),
                grid_mode=list(doc["grid_mode"]),
                ev_class={e["id"]: e["class"] for e in evs},
                charge_kwh={e["id"]: list(e["charge_kwh"]) for e in evs},
                discharge_kwh={e["id"]: list(e["discharge_kwh"]) for e in evs},
                mode={e["id"]: list(e["mode"]) for e in evs},
                soc_kwh={e["id"]: list(e["soc_kwh"]) for e in evs},
                gamma_cents=float(doc["gamma_cents"]),
                breakdown=CostBreakdown(**doc["breakdown"]),
                gap=float(doc.get("gap", 0.0)),
                nodes=int(doc.get("nodes", 0)),
                elapsed_s=float(doc.get("elapsed_s", 0.0)),
                warnings=list(doc.get("warnings", [])),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"schedule document missing or malformed field: {exc}") from None

    def to_csv(self) -> str:
        lines = ["slot,pv_kwh,grid_import_kwh,grid_export_kwh,green_charge_kwh,"
                 "green_discharge_kwh,fixed_charge_kwh"]
        greens = [i for i, c in self.ev_class.items() if c == EvClass.GREEN.value]
        fixed = [i for i, c in self.ev_class.items() if c != EvClass.GREEN.value]
        for t in range(self.slot_count):
            gc = sum(self.charge_kwh[i][t] for i in greens)
            gd = sum(self.discharge_kwh[i][t] for i in greens)
            fc = sum(self.charge_kwh[i][t] for i in fixed)
            lines.append(",".join([str(t + 1)] + [f"{v:.6f}" for v in (
                self.generation_kwh[t], self.grid_import_kwh[t], self.grid_export_kwh[t],
                gc, gd, fc)]))
        return "\n".join(lines) + "\n"


# -- model -------------------------------------------------------------------------

def add_green_ev(model: MilpModel, ev, mu: float) -> GreenVars:
    """Add one green EV's variables and its SOC, floor and mode rows to ``model``."""
    gv = GreenVars(list(ev.stay_slots))
    emax = ev.max_rate_kwh_per_slot
    gv.terminal_target = min(ev.target_soc_kwh, ev.reachable_soc(mu))
    for t in gv.slots:
        gv.charge[t] = model.add_variable(0.0, emax, name=f"c_{ev.id}_{t}")
        gv.discharge[t] = model.add_variable(0.0, emax, name=f"d_{ev.id}_{t}")
        gv.mode[t] = model.add_binary(name=f"y_{ev.id}_{t}")
        low = ev.min_soc_kwh
        if t == ev.leave_slot:
            low = max(low, gv.terminal_target)
        gv.soc[t] = model.add_variable(low, ev.capacity_kwh, name=f"s_{ev.id}_{t}")
    for t in gv.slots:
        c, d, y, s = gv.charge[t], gv.discharge[t], gv.mode[t], gv.soc[t]
        # s_t - s_{t-1} - mu c_t + d_t = 0, with s_{arrival} a constant
        if t == ev.arrive_slot + 1:
            model.add_constraint({s: 1.0, c: -mu, d: 1.0}, "=", ev.initial_soc_kwh,
                                 name=f"soc_{ev.id}_{t}")
        else:
            model.add_constraint({s: 1.0, gv.soc[t - 1]: -1.0, c: -mu, d: 1.0}, "=", 0.0,
                                 name=f"soc_{ev.id}_{t}")
        # Smallest valid big-M: with y = 1 the row reduces to the safety floor.
        model.add_constraint({s: 1.0, y: ev.green_floor_kwh - ev.min_soc_kwh}, ">=",
                             ev.green_floor_kwh, name=f"floor_{ev.id}_{t}")
        model.add_constraint({c: 1.0, y: -emax}, "<=", 0.0, name=f"charge_mode_{ev.id}_{t}")
        model.add_constraint({d: 1.0, y: emax}, "<=", emax, name=f"discharge_mode_{ev.id}_{t}")
    return gv


def build_model(scenario: Scenario, fixed_load: FixedLoadProfile) -> Tuple[MilpModel, VariableMap]:
    grid = scenario.grid
    T = grid.slot_count
    if T < 1:
        raise ValidationError("empty time grid")
    fixed_ids = {ev.id for ev in scenario.fleet if ev.ev_class is not EvClass.GREEN}
    if set(fixed_load.plans) != fixed_ids or len(fixed_load.demand_kwh) != T:
        raise ValidationError("fixed load does not match the scenario fleet")

    mu = scenario.battery_efficiency
    gmax = scenario.grid_max_kwh_per_slot
    gen = station_generation(scenario.pv, scenario.irradiance, grid).energy_kwh
    sell, buy = scenario.prices.sell, scenario.prices.buy
    charge_price, discharge_price = green_prices(scenario.prices, scenario.tariff)

    model = MilpModel("station")
    objective: Dict[int, float] = {}
    imports, exports, modes = [], [], []
    for t in grid.slots:
        imports.append(model.add_variable(0.0, gmax, name=f"grid_in_{t}"))
        exports.append(model.add_variable(0.0, gmax, name=f"grid_out_{t}"))
        modes.append(model.add_binary(name=f"x_{t}"))
        objective[imports[-1]] = sell[t - 1]
        objective[exports[-1]] = -buy[t - 1]

    green: Dict[str, GreenVars] = {}
    for ev in scenario.evs(EvClass.GREEN):
        gv = add_green_ev(model, ev, mu)
        for t in gv.slots:
            objective[gv.charge[t]] = -charge_price[t - 1]
            objective[gv.discharge[t]] = discharge_price[t - 1]
        green[ev.id] = gv

    for t in grid.slots:
        row = {exports[t - 1]: -1.0, imports[t - 1]: 1.0}
        for gv in green.values():
            if t in gv.charge:
                row[gv.charge[t]] = -1.0
                row[gv.discharge[t]] = 1.0
        model.add_constraint(row, ">=", fixed_load.demand_kwh[t - 1] - gen[t - 1],
                             name=f"balance_{t}")

    for t in grid.slots:
        model.add_constraint({exports[t - 1]: 1.0, modes[t - 1]: -gmax}, "<=", 0.0,
                             name=f"export_mode_{t}")
        model.add_constraint({imports[t - 1]: 1.0, modes[t - 1]: gmax}, "<=", gmax,
                             name=f"import_mode_{t}")

    fixed_revenue = fixed_load.premium_revenue_cents + fixed_load.conservative_revenue_cents
    model.set_objective(objective, offset=-fixed_revenue)
    return model, VariableMap(imports, exports, modes, green)


# -- solving -------------------------------------------------------------------------

Solver = Callable[[MilpModel, Optional[SolveOptions]], milp.MilpSolution]


def _diagnose(model: MilpModel, vmap: VariableMap) -> str:
    """Name the requirement class that makes an infeasible model infeasible."""
    relaxed = model.relaxed()
    if milp.solve_lp(relaxed).status is Status.INFEASIBLE:
        targets = {gv.soc[max(gv.slots)]: (model.variables[gv.soc[max(gv.slots)]].upper)
                   for gv in vmap.green.values() if gv.slots}
        loose = relaxed.with_bounds({v: (0.0, hi) for v, hi in targets.items()})
        if milp.solve_lp(loose).status is Status.OPTIMAL:
            return "terminal_soc"
        return "energy_balance"
    return "mode_exclusivity"


def optimize(scenario: Scenario, options: Optional[SolveOptions] = None,
             solver: Optional[Solver] = None) -> Schedule:
    """Minimum-cost schedule for ``scenario``.

    ``solver`` replaces the built-in branch-and-bound (same call signature as
    :func:`pvcharge.milp.solve`). Raises :class:`InfeasibleError` when no
    schedule exists and :class:`SolverLimitError` when limits stop the search
    before any schedule is found.
    """
    if scenario.tariff.green_discharge_factor < EPSILON_CONVERGENCE_THRESHOLD \
            and scenario.count(EvClass.GREEN):
        warnings.warn(
            f"green discharge factor {scenario.tariff.green_discharge_factor} is below "
            f"{EPSILON_CONVERGENCE_THRESHOLD}; the search may stop at node/time limits",
            SlowConvergenceWarning, stacklevel=2)
    fixed = build_fixed_load(scenario.fleet, scenario.prices, scenario.tariff,
                             scenario.battery_efficiency, scenario.grid)
    model, vmap = build_model(scenario, fixed)
    notes = list(fixed.warnings)
    for ev in scenario.evs(EvClass.GREEN):
        if not ev.target_reachable(scenario.battery_efficiency):
            notes.append(f"{ev.id}: target SOC unreachable; terminal SOC bound lowered "
                         "to the reachable level")
    options = options or DEFAULT_OPTIONS
    if solver is not None:
        sol = solver(model, options)
    else:
        sol = _solve_station(scenario, model, vmap, fixed, options)
    if sol.status is Status.INFEASIBLE:
        requirement = _diagnose(model, vmap)
        raise InfeasibleError(f"no feasible schedule ({requirement})", requirement)
    if sol.status is Status.UNBOUNDED:
        raise InfeasibleError("scheduling model is unbounded", "unbounded")
    if not sol.has_values:
        raise SolverLimitError("solver limits reached before a schedule was found")
    if sol.status is not Status.OPTIMAL:
        notes.append(f"search stopped at limits with relative gap {sol.gap:.3g}")
    return _extract(scenario, fixed, vmap, sol, notes)


def _solve_station(scenario, model, vmap, fixed, options: SolveOptions) -> milp.MilpSolution:
    """Built-in strategy: price decomposition and polishing, then branch-and-bound if a gap remains."""
    if not vmap.green:
        return milp.solve(model, options)
    gen = station_generation(scenario.pv, scenario.irradiance, scenario.grid).energy_kwh
    pc, pd = green_prices(scenario.prices, scenario.tariff)
    return StationSolver(scenario, model, vmap, fixed.demand_kwh, gen, pc, pd,
                         add_green_ev, options).run()


def _extract(scenario, fixed, vmap, sol, notes) -> Schedule:
    x = sol.values
    T = scenario.grid.slot_count
    gen = list(station_generation(scenario.pv, scenario.irradiance, scenario.grid).energy_kwh)

    def clean(v):
        v = float(v)
        return 0.0 if abs(v) < 1e-10 else v

    ev_class, charge, discharge, mode, soc = {}, {}, {}, {}, {}
    for ev in scenario.fleet:
        ev_class[ev.id] = ev.ev_class.value
        if ev.ev_class is EvClass.GREEN:
            gv = vmap.green[ev.id]
            c = [0.0] * T
            d = [0.0] * T
            y: List[Optional[int]] = [None] * T
            s = [ev.initial_soc_kwh] * T
            level = ev.initial_soc_kwh
            for t in range(1, T + 1):
                if t in gv.charge:
                    c[t - 1] = clean(x[gv.charge[t]])
                    d[t - 1] = clean(x[gv.discharge[t]])
                    y[t - 1] = int(round(x[gv.mode[t]]))
                    level = float(x[gv.soc[t]])
                s[t - 1] = level
            charge[ev.id], discharge[ev.id], mode[ev.id], soc[ev.id] = c, d, y, s
        else:
            plan = fixed.plans[ev.id].plan
            charge[ev.id] = list(plan.charge_kwh)
            discharge[ev.id] = [0.0] * T
            mode[ev.id] = [None] * T
            soc[ev.id] = list(plan.soc_kwh)

    imports = [clean(x[v]) for v in vmap.grid_import]
    exports = [clean(x[v]) for v in vmap.grid_export]
    gmode = [int(round(x[v])) for v in vmap.grid_mode]
    breakdown = cost_breakdown(scenario, fixed, imports, exports, charge, discharge)
    return Schedule(
        status=sol.status.value, generation_kwh=gen, grid_import_kwh=imports,
        grid_export_kwh=exports, grid_mode=gmode, ev_class=ev_class, charge_kwh=charge,
        discharge_kwh=discharge, mode=mode, soc_kwh=soc, gamma_cents=breakdown.total,
        breakdown=breakdown, gap=float(sol.gap), nodes=int(sol.nodes),
        elapsed_s=float(sol.elapsed), warnings=notes)


def cost_breakdown(scenario, fixed, imports, exports, charge, discharge) -> CostBreakdown:
    sell, buy = scenario.prices.sell, scenario.prices.buy
    pc, pd = green_prices(scenario.prices, scenario.tariff)
    greens = [ev.id for ev in scenario.evs(EvClass.GREEN)]
    gc = np.sum([charge[i] for i in greens], axis=0) if greens else np.zeros(len(sell))
    gd = np.sum([discharge[i] for i in greens], axis=0) if greens else np.zeros(len(sell))
    return CostBreakdown(
        green_discharge_payments=float(pd @ gd),
        grid_purchases=float(sell @ np.asarray(imports)),
        green_charging_revenue=float(pc @ gc),
        premium_charging_revenue=fixed.premium_revenue_cents,
        conservative_charging_revenue=fixed.conservative_revenue_cents,
        grid_sales_revenue=float(buy @ np.asarray(exports)),
    )


# -- independent checks -----------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    family: str
    message: str
    slot: Optional[int] = None
    ev_id: Optional[str] = None
    amount: float = 0.0

    def __str__(self):
        where = []
        if self.ev_id is not None:
            where.append(self.ev_id)
        if self.slot is not None:
            where.append(f"slot {self.slot}")
        loc = f" ({', '.join(where)})" if where else ""
        return f"[{self.family}]{loc} {self.message}"


def _check_shapes(scenario: Scenario, schedule: Schedule):
    T = scenario.grid.slot_count
    for name in ("generation_kwh", "grid_import_kwh", "grid_export_kwh", "grid_mode"):
        if len(getattr(schedule, name)) != T:
            raise ValidationError(
                f"schedule {name} has {len(getattr(schedule, name))} slots, scenario has {T}")
    ids = [ev.id for ev in scenario.fleet]
    if sorted(ids) != sorted(schedule.ev_class):
        missing = sorted(set(ids) - set(schedule.ev_class))
        extra = sorted(set(schedule.ev_class) - set(ids))
        raise ValidationError(f"schedule and scenario fleets differ (missing {missing}, extra {extra})")
    for ev in scenario.fleet:
        if schedule.ev_class[ev.id] != ev.ev_class.value:
            raise ValidationError(f"{ev.id}: class {schedule.ev_class[ev.id]} in schedule, "
                                  f"{ev.ev_class.value} in scenario")
        for name in ("charge_kwh", "discharge_kwh", "mode", "soc_kwh"):
            if len(getattr(schedule, name)[ev.id]) != T:
                raise ValidationError(f"{ev.id}: {name} has wrong length")


def validate_schedule(scenario: Scenario, schedule: Schedule, tol: float = 1e-6) -> List[Violation]:
    """Re-check every constraint family and the cost total from raw flows.

    Returns an empty list when the schedule is feasible within ``tol``
    (scaled by ``max(1, magnitude)``) and its reported cost matches.
    Raises :class:`ValidationError` when shapes do not match the scenario.
    """
    _check_shapes(scenario, schedule)
    out: List[Violation] = []
    T = scenario.grid.slot_count
    mu = scenario.battery_efficiency
    gmax = scenario.grid_max_kwh_per_slot

    def bad(family, message, slot=None, ev_id=None, amount=0.0):
        out.append(Violation(family, message, slot, ev_id, float(amount)))

    def tol_for(*mags):
        return tol * max(1.0, *(abs(m) for m in mags))

    gen = np.array(station_generation(scenario.pv, scenario.irradiance, scenario.grid).energy_kwh)
    if np.max(np.abs(gen - np.asarray(schedule.generation_kwh, dtype=float)), initial=0.0) > tol:
        bad("energy_balance", "reported generation differs from the scenario PV output")

    imp = np.asarray(schedule.grid_import_kwh, dtype=float)
    exp = np.asarray(schedule.grid_export_kwh, dtype=float)
    for t in range(1, T + 1):
        i, e, xm = imp[t - 1], exp[t - 1], schedule.grid_mode[t - 1]
        if i < -tol or e < -tol:
            bad("nonnegativity", "negative grid flow", t, amount=min(i, e))
        if xm not in (0, 1):
            bad("binary_mode", f"grid mode {xm!r} is not 0/1", t)
            continue
        if e > xm * gmax + tol_for(gmax):
            bad("grid_limit", "export exceeds limit for the grid direction", t, amount=e)
        if i > (1 - xm) * gmax + tol_for(gmax):
            bad("grid_limit", "import exceeds limit for the grid direction", t, amount=i)
        if min(i, e) > tol:
            bad("grid_limit", "simultaneous grid import and export", t, amount=min(i, e))

    supply = gen + imp
    demand = exp.copy()
    fixed = build_fixed_load(scenario.fleet, scenario.prices, scenario.tariff, mu, scenario.grid)

    for ev in scenario.fleet:
        c = np.asarray(schedule.charge_kwh[ev.id], dtype=float)
        d = np.asarray(schedule.discharge_kwh[ev.id], dtype=float)
        s = np.asarray(schedule.soc_kwh[ev.id], dtype=float)
        y = schedule.mode[ev.id]
        emax = ev.max_rate_kwh_per_slot
        supply += d
        demand += c
        stay = set(ev.stay_slots)
        for t in range(1, T + 1):
            k = t - 1
            if c[k] < -tol or d[k] < -tol:
                bad("nonnegativity", "negative EV flow", t, ev.id, min(c[k], d[k]))
            if t not in stay and (abs(c[k]) > tol or abs(d[k]) > tol):
                bad("ev_rate", "energy flow outside the stay", t, ev.id, max(abs(c[k]), abs(d[k])))
            if c[k] > emax + tol_for(emax):
                bad("ev_rate", "charge exceeds max rate", t, ev.id, c[k] - emax)
            if d[k] > emax + tol_for(emax):
                bad("ev_rate", "discharge exceeds max rate", t, ev.id, d[k] - emax)
            if min(c[k], d[k]) > tol:
                bad("ev_rate", "simultaneous charge and discharge", t, ev.id, min(c[k], d[k]))

        if abs(s[ev.arrive_slot - 1] - ev.initial_soc_kwh) > tol_for(ev.capacity_kwh):
            bad("initial_soc", "SOC at arrival differs from initial SOC", ev.arrive_slot, ev.id,
                s[ev.arrive_slot - 1] - ev.initial_soc_kwh)
        prev = ev.initial_soc_kwh
        for t in sorted(stay):
            k = t - 1
            expected = prev + mu * c[k] - d[k]
            if abs(s[k] - expected) > tol_for(ev.capacity_kwh):
                bad("soc_update", "SOC does not follow the charge/discharge update", t, ev.id,
                    s[k] - expected)
            if s[k] < ev.min_soc_kwh - tol_for(ev.min_soc_kwh):
                bad("safety_floor", "SOC below the battery safety minimum", t, ev.id,
                    ev.min_soc_kwh - s[k])
            if s[k] > ev.capacity_kwh + tol_for(ev.capacity_kwh):
                bad("safety_floor", "SOC above capacity", t, ev.id, s[k] - ev.capacity_kwh)
            prev = s[k]

        final = s[ev.leave_slot - 1]
        target = ev.target_soc_kwh if ev.target_reachable(mu) else ev.reachable_soc(mu)
        if final < target - tol_for(target):
            bad("terminal_soc", "SOC at leaving time below target", ev.leave_slot, ev.id,
                target - final)
        if final > ev.capacity_kwh + tol_for(ev.capacity_kwh):
            bad("terminal_soc", "SOC at leaving time above capacity", ev.leave_slot, ev.id,
                final - ev.capacity_kwh)

        if ev.ev_class is EvClass.GREEN:
            for t in range(1, T + 1):
                k = t - 1
                if t not in stay:
                    if y[k] is not None:
                        bad("binary_mode", "mode set outside the stay", t, ev.id)
                    continue
                if y[k] not in (0, 1):
                    bad("binary_mode", f"mode {y[k]!r} is not 0/1", t, ev.id)
                    continue
                if c[k] > y[k] * emax + tol_for(emax):
                    bad("ev_rate", "charging while in discharge mode", t, ev.id, c[k])
                if d[k] > (1 - y[k]) * emax + tol_for(emax):
                    bad("ev_rate", "discharging while in charge mode", t, ev.id, d[k])
                floor = ev.green_floor_kwh
                if (y[k] == 0 or d[k] > tol) and s[k] < floor - tol_for(floor):
                    bad("green_floor", "discharge leaves SOC below the green floor", t, ev.id,
                        floor - s[k])
        else:
            if np.any(np.abs(d) > tol):
                bad("ev_rate", f"{ev.ev_class.value} EV discharged", None, ev.id, float(np.max(d)))
            plan = np.asarray(fixed.plans[ev.id].plan.charge_kwh)
            if np.max(np.abs(plan - c)) > tol:
                bad("fixed_plan", "charging differs from the class charging rule", None, ev.id,
                    float(np.max(np.abs(plan - c))))

    for t in range(1, T + 1):
        gap = demand[t - 1] - supply[t - 1]
        if gap > tol_for(demand[t - 1]):
            bad("energy_balance", "supply does not cover demand", t, amount=gap)

    # Cost recomputed term by term from flows and prices.
    p_s = scenario.prices.sell + scenario.tariff.markup_cents
    p_gc = p_s * scenario.tariff.green_charge_factor
    p_gd = p_gc * scenario.tariff.green_discharge_factor
    gamma = float(scenario.prices.sell @ imp - scenario.prices.buy @ exp)
    for ev in scenario.fleet:
        c = np.asarray(schedule.charge_kwh[ev.id], dtype=float)
        d = np.asarray(schedule.discharge_kwh[ev.id], dtype=float)
        if ev.ev_class is EvClass.GREEN:
            gamma += float(p_gd @ d - p_gc @ c)
        else:
            gamma -= float(np.asarray(fixed.plans[ev.id].price_cents_per_kwh) @ c)
    if abs(gamma - schedule.gamma_cents) > tol * max(1.0, abs(gamma)):
        bad("objective", f"reported cost {schedule.gamma_cents} differs from recomputed {gamma}",
            amount=schedule.gamma_cents - gamma)
    if abs(schedule.breakdown.total - schedule.gamma_cents) > tol * max(1.0, abs(gamma)):
        bad("objective", "cost breakdown does not sum to the reported cost")
    return out


# -- early leaving ----------------------------------------------------------------

@dataclass(frozen=True)
class EarlyLeaveRecord:
    ev_id: str
    ev_class: str
    slot: int
    soc_kwh: float
    target_soc_kwh: float
    floor_respected: Optional[bool] = None

    @property
    def soc_fraction_of_target(self) -> float:
        return self.soc_kwh / self.target_soc_kwh if self.target_soc_kwh else math.nan


@dataclass(frozen=True)
class EarlyLeaveResult:
    records: Tuple[EarlyLeaveRecord, ...]
    notes: Tuple[str, ...]

    def class_average(self, ev_class, normalized: bool = True) -> float:
        vals = [r.soc_fraction_of_target if normalized else r.soc_kwh
                for r in self.records if r.ev_class == EvClass(ev_class).value]
        return float(np.mean(vals)) if vals else math.nan


def evaluate_early_leaving(schedule: Schedule, scenario: Scenario, slots_early: int) -> EarlyLeaveResult:
    """SOC each EV would leave with ``slots_early`` slots before its declared time.

    Green EVs are also checked against their discharge floor: once any
    discharge has happened, SOC must stay at or above the floor.
    """
    if slots_early < 0:
        raise ValidationError("slots_early must be >= 0")
    _check_shapes(scenario, schedule)
    records, notes = [], []
    for ev in scenario.fleet:
        slot = ev.leave_slot - slots_early
        if slot <= ev.arrive_slot:
            notes.append(f"{ev.id}: stay of {ev.stay_length} slots is too short for "
                         f"leaving {slots_early} slots early; omitted")
            continue
        soc = float(schedule.soc_kwh[ev.id][slot - 1])
        floor_ok = None
        if ev.ev_class is EvClass.GREEN:
            discharged = any(schedule.discharge_kwh[ev.id][k] > 1e-9
                             for k in range(ev.arrive_slot, slot))
            if discharged:
                floor_ok = soc >= ev.green_floor_kwh - 1e-6 * max(1.0, ev.green_floor_kwh)
            else:
                floor_ok = soc >= ev.initial_soc_kwh - 1e-6 * max(1.0, ev.initial_soc_kwh)
        records.append(EarlyLeaveRecord(ev.id, ev.ev_class.value, slot, soc,
                                        ev.target_soc_kwh, floor_ok))
    return EarlyLeaveResult(tuple(records), tuple(notes))


# -- estimator facade ----------------------------------------------------------------

class StationScheduler(BaseEstimator):
    """Estimator-style wrapper around :func:`optimize`.

    ``fit(scenario)`` solves and stores ``schedule_`` and ``violations_``;
    ``score`` returns the negated station cost so that higher is better.

    Parameters
    ----------
    feasibility_tol, integrality_tol, gap : float
        Solver tolerances.
    node_limit : int or None
        Branch-and-bound node cap.
    time_limit : float or None
        Wall-clock cap in seconds.
    validate : bool
        Run :func:`validate_schedule` after fitting.
    """

    def __init__(self, feasibility_tol=1e-6, integrality_tol=1e-6, gap=DEFAULT_OPTIONS.gap,
                 node_limit=DEFAULT_OPTIONS.node_limit, time_limit=None, validate=True):
        self.feasibility_tol = feasibility_tol
        self.integrality_tol = integrality_tol
        self.gap = gap
        self.node_limit = node_limit
        self.time_limit = time_limit
        self.validate = validate

    def _options(self) -> SolveOptions:
        return SolveOptions(self.feasibility_tol, self.integrality_tol, self.gap,
                            self.node_limit, self.time_limit)

    def fit(self, scenario: Scenario, y=None):
        self.schedule_ = optimize(scenario, self._options())
        self.violations_ = (validate_schedule(scenario, self.schedule_, self.feasibility_tol)
                            if self.validate else [])
        return self

    def _check_fitted(self):
        if not hasattr(self, "schedule_"):
            raise NotFittedError("StationScheduler is not fitted; call fit(scenario) first")

    def predict(self, scenario: Scenario = None) -> Schedule:
        """The fitted schedule (``scenario`` is accepted for API symmetry)."""
        self._check_fitted()
        return self.schedule_

    def score(self, scenario: Scenario = None, y=None) -> float:
        self._check_fitted()
        return -self.schedule_.gamma_cents
