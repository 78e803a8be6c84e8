"""Experiments on top of the scheduler: cost reports, sweeps, baseline and seasons.

Sweep CSV columns follow the station-side flow names: ``grid_in_kwh`` is
energy sold into the grid, ``grid_out_kwh`` energy bought out of it.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .exceptions import ValidationError
from .fleet import EvClass, build_fixed_load
from .milp import SolveOptions
from .pv import IrradianceSeries, PvArray, station_generation
from .scenario import Scenario, with_green_fraction
from .scheduler import CostBreakdown, Schedule, optimize
from .tariff import PriceCurve, green_prices

logger = logging.getLogger(__name__)

WATERMARK = ("synthetic data: bundled irradiance and price curves are stand-ins, "
             "so absolute costs are illustrative; compare orderings and trends only")
SWEEP_COLUMNS = ("param", "gamma_cents", "grid_in_kwh", "grid_out_kwh",
                 "green_discharge_kwh", "pv_kwh")


@dataclass(frozen=True)
class CostReport:
    """Station cost with its terms and per-class average EV costs (cents).

    ``class_average_cents`` maps each class to ``None`` when the fleet has no
    EV of that class.
    """

    gamma_cents: float
    breakdown: CostBreakdown
    ev_cost_cents: Dict[str, float]
    class_average_cents: Dict[str, Optional[float]]
    seed: Optional[int] = None
    season: str = ""
    green_fraction: float = math.nan
    status: str = ""
    gap: float = 0.0

    def to_dict(self) -> dict:
        return {
            "gamma_cents": self.gamma_cents,
            "breakdown": {k: getattr(self.breakdown, k) for k in CostBreakdown.__dataclass_fields__},
            "class_average_cents": dict(self.class_average_cents),
            "ev_cost_cents": dict(self.ev_cost_cents),
            "seed": self.seed,
            "season": self.season,
            "green_fraction": None if math.isnan(self.green_fraction) else self.green_fraction,
            "status": self.status,
            "gap": self.gap,
            "note": WATERMARK,
        }

    def to_text(self) -> str:
        rows = [("station cost (gamma)", self.gamma_cents)]
        labels = {
            "green_discharge_payments": "green discharge payments",
            "grid_purchases": "grid purchases",
            "green_charging_revenue": "green charging revenue",
            "premium_charging_revenue": "premium charging revenue",
            "conservative_charging_revenue": "conservative charging revenue",
            "grid_sales_revenue": "grid sales revenue",
        }
        for key, label in labels.items():
            rows.append((label, getattr(self.breakdown, key)))
        for cls in EvClass:
            avg = self.class_average_cents.get(cls.value)
            rows.append((f"average {cls.value} EV cost", avg))
        width = max(len(r[0]) for r in rows)
        lines = [f"# {WATERMARK}"]
        meta = [f"seed={self.seed}", f"season={self.season or '-'}"]
        if not math.isnan(self.green_fraction):
            meta.append(f"green_fraction={self.green_fraction:g}")
        meta.append(f"status={self.status}")
        if self.gap:
            meta.append(f"gap={self.gap:.2e}")
        lines.append("  ".join(meta))
        for label, value in rows:
            shown = "n/a" if value is None else f"{value:12.2f}"
            lines.append(f"{label:<{width}}  {shown:>12} cents")
        return "\n".join(lines) + "\n"


def ev_costs(schedule: Schedule, scenario: Scenario) -> Dict[str, float]:
    """What each EV pays the station over the day (green discharge credited)."""
    fixed = build_fixed_load(scenario.fleet, scenario.prices, scenario.tariff,
                             scenario.battery_efficiency, scenario.grid)
    pc, pd = green_prices(scenario.prices, scenario.tariff)
    out = {}
    for ev in scenario.fleet:
        c = np.asarray(schedule.charge_kwh[ev.id], dtype=float)
        if ev.ev_class is EvClass.GREEN:
            d = np.asarray(schedule.discharge_kwh[ev.id], dtype=float)
            out[ev.id] = float(pc @ c - pd @ d)
        else:
            out[ev.id] = float(np.asarray(fixed.plans[ev.id].price_cents_per_kwh) @ c)
    return out


def _flows_breakdown(schedule: Schedule, scenario: Scenario, costs: Dict[str, float]) -> CostBreakdown:
    pc, pd = green_prices(scenario.prices, scenario.tariff)
    greens = scenario.evs(EvClass.GREEN)
    gc = sum((np.asarray(schedule.charge_kwh[ev.id]) for ev in greens), np.zeros(len(pc)))
    gd = sum((np.asarray(schedule.discharge_kwh[ev.id]) for ev in greens), np.zeros(len(pc)))
    return CostBreakdown(
        green_discharge_payments=float(pd @ gd),
        grid_purchases=float(scenario.prices.sell @ np.asarray(schedule.grid_import_kwh)),
        green_charging_revenue=float(pc @ gc),
        premium_charging_revenue=sum(costs[ev.id] for ev in scenario.evs(EvClass.PREMIUM)),
        conservative_charging_revenue=sum(costs[ev.id]
                                          for ev in scenario.evs(EvClass.CONSERVATIVE)),
        grid_sales_revenue=float(scenario.prices.buy @ np.asarray(schedule.grid_export_kwh)),
    )


def cost_report(schedule: Schedule, scenario: Scenario) -> CostReport:
    """Recompute every cost term from the schedule's flows and the scenario's prices."""
    costs = ev_costs(schedule, scenario)
    breakdown = _flows_breakdown(schedule, scenario, costs)
    averages: Dict[str, Optional[float]] = {}
    for cls in EvClass:
        members = [costs[ev.id] for ev in scenario.evs(cls)]
        averages[cls.value] = sum(members) / len(members) if members else None
    n = len(scenario.fleet)
    fraction = scenario.count(EvClass.GREEN) / n if n else math.nan
    return CostReport(breakdown.total, breakdown, costs, averages, scenario.config.seed,
                      scenario.label, fraction, schedule.status, schedule.gap)


# -- sweeps ------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    """One sweep point. Energies in kWh over the whole day."""

    param: float
    gamma_cents: float
    grid_in_kwh: float
    grid_out_kwh: float
    green_discharge_kwh: float
    pv_kwh: float
    status: str = ""
    gap: float = 0.0
    schedule: Optional[Schedule] = field(default=None, repr=False, compare=False)

    def as_tuple(self):
        return tuple(getattr(self, c) for c in SWEEP_COLUMNS)


def _row(param: float, schedule: Schedule, scenario: Scenario) -> SweepRow:
    green_d = sum(sum(schedule.discharge_kwh[ev.id]) for ev in scenario.evs(EvClass.GREEN))
    return SweepRow(float(param), schedule.gamma_cents, float(sum(schedule.grid_export_kwh)),
                    float(sum(schedule.grid_import_kwh)), float(green_d),
                    float(sum(schedule.generation_kwh)), schedule.status, schedule.gap, schedule)


def penetration_sweep(base: Scenario, fractions: Iterable[float],
                      options: Optional[SolveOptions] = None) -> List[SweepRow]:
    """Optimize the same EV population at each green fraction; rows sorted by fraction."""
    rows = []
    for f in sorted({float(v) for v in fractions}):
        if not 0.0 <= f <= 1.0:
            raise ValidationError(f"green fraction {f} outside [0, 1]")
        scenario = with_green_fraction(base, f)
        rows.append(_row(f, optimize(scenario, options), scenario))
    return rows


def with_panel_count(scenario: Scenario, panel_count: float) -> Scenario:
    if not panel_count >= 0:
        raise ValidationError("panel count must be >= 0")
    pv = PvArray(scenario.pv.efficiency, scenario.pv.panel_area_m2, float(panel_count))
    return replace(scenario, pv=pv)


def panel_sweep(scenario: Scenario, panel_counts: Iterable[float],
                options: Optional[SolveOptions] = None) -> List[SweepRow]:
    """Optimize the same fleet for each panel count; rows sorted by count."""
    rows = []
    for k in sorted({float(v) for v in panel_counts}):
        s = with_panel_count(scenario, k)
        rows.append(_row(k, optimize(s, options), s))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in r.as_tuple()])
    return buf.getvalue()


def sweep_text(rows: Sequence[SweepRow], param_label: str = "param") -> str:
    head = (param_label, "gamma_cents", "grid_in_kwh", "grid_out_kwh", "green_dis_kwh",
            "pv_kwh", "status")
    lines = [f"# {WATERMARK}", "  ".join(f"{h:>14}" for h in head)]
    for r in rows:
        vals = [f"{v:14.3f}" for v in r.as_tuple()] + [f"{r.status:>14}"]
        lines.append("  ".join(vals))
    return "\n".join(lines) + "\n"


# -- baseline and seasons ----------------------------------------------------------

def fixed_contract_scenario(scenario: Scenario, contract_price: Optional[float] = None) -> Scenario:
    """All EVs green and every transaction at one flat price.

    Markup and grid spread become zero and both green factors one, so the
    grid sell/buy prices and all EV prices equal ``contract_price`` (default:
    mean grid sell price).
    """
    if contract_price is None:
        contract_price = float(np.mean(scenario.prices.sell))
    if not contract_price > 0:
        raise ValidationError("contract price must be > 0")
    T = scenario.grid.slot_count
    base = with_green_fraction(scenario, 1.0)
    tariff = replace(base.tariff, markup_cents=0.0, grid_spread_cents=0.0,
                     green_charge_factor=1.0, green_discharge_factor=1.0)
    prices = PriceCurve.from_sell([float(contract_price)] * T, 0.0)
    return replace(base, tariff=tariff, prices=prices)


def baseline_fixed_contract(scenario: Scenario, contract_price: Optional[float] = None,
                            options: Optional[SolveOptions] = None) -> CostReport:
    s = fixed_contract_scenario(scenario, contract_price)
    return cost_report(optimize(s, options), s)


@dataclass(frozen=True)
class SeasonalComparison:
    summer: CostReport
    winter: CostReport
    summer_green_discharge_kwh: float
    winter_green_discharge_kwh: float


def seasonal_compare(scenario: Scenario, summer: IrradianceSeries, winter: IrradianceSeries,
                     options: Optional[SolveOptions] = None) -> SeasonalComparison:
    """Two runs of the same fleet and prices that differ only in irradiance."""
    reports, discharge = [], []
    for label, series in (("summer", summer), ("winter", winter)):
        s = replace(scenario, irradiance=series, label=label)
        sched = optimize(s, options)
        reports.append(cost_report(sched, s))
        discharge.append(sum(sum(sched.discharge_kwh[ev.id]) for ev in s.evs(EvClass.GREEN)))
    return SeasonalComparison(reports[0], reports[1], float(discharge[0]), float(discharge[1]))


def pv_total_kwh(scenario: Scenario) -> float:
    return station_generation(scenario.pv, scenario.irradiance, scenario.grid).total_kwh
