"""EV records and the fixed charging plans of premium and conservative EVs."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ValidationError
from .pv import TimeGrid
from .tariff import PriceCurve, TariffParams, conservative_price, premium_prices
from .validation import check_fraction

logger = logging.getLogger(__name__)

DEFAULT_MAX_RATE = 5.0
DEFAULT_BATTERY_EFFICIENCY = 0.9
_TOL = 1e-9


class EvClass(str, enum.Enum):
    PREMIUM = "premium"
    CONSERVATIVE = "conservative"
    GREEN = "green"


@dataclass(frozen=True)
class EvSpec:
    """One vehicle. Energies in kWh, slots 1-based; it charges on slots (arrive, leave]."""

    id: str
    ev_class: EvClass
    capacity_kwh: float
    initial_soc_kwh: float
    target_soc_kwh: float
    min_soc_kwh: float
    arrive_slot: int
    leave_slot: int
    max_rate_kwh_per_slot: float = DEFAULT_MAX_RATE
    green_floor_kwh: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "ev_class", EvClass(self.ev_class))
        s = self
        if not s.capacity_kwh > 0:
            raise ValidationError(f"{s.id}: capacity must be > 0")
        if not s.min_soc_kwh <= s.initial_soc_kwh <= s.capacity_kwh:
            raise ValidationError(f"{s.id}: need min_soc <= initial_soc <= capacity")
        if not s.min_soc_kwh <= s.target_soc_kwh <= s.capacity_kwh:
            raise ValidationError(f"{s.id}: need min_soc <= target_soc <= capacity")
        if s.min_soc_kwh < 0:
            raise ValidationError(f"{s.id}: min_soc must be >= 0")
        if int(s.arrive_slot) != s.arrive_slot or int(s.leave_slot) != s.leave_slot:
            raise ValidationError(f"{s.id}: slots must be integers")
        if not 1 <= s.arrive_slot < s.leave_slot:
            raise ValidationError(f"{s.id}: need 1 <= arrive_slot < leave_slot")
        if not s.max_rate_kwh_per_slot > 0:
            raise ValidationError(f"{s.id}: max rate must be > 0")
        if s.green_floor_kwh is not None and not (
                s.min_soc_kwh <= s.green_floor_kwh <= s.capacity_kwh):
            raise ValidationError(f"{s.id}: need min_soc <= green_floor <= capacity")
        if s.ev_class is EvClass.GREEN and s.green_floor_kwh is None:
            raise ValidationError(f"{s.id}: green EVs need green_floor_kwh")

    @property
    def stay_slots(self) -> range:
        return range(self.arrive_slot + 1, self.leave_slot + 1)

    @property
    def stay_length(self) -> int:
        return self.leave_slot - self.arrive_slot

    def check_grid(self, grid: TimeGrid):
        if self.leave_slot > grid.slot_count:
            raise ValidationError(
                f"{self.id}: leave_slot {self.leave_slot} beyond {grid.slot_count} slots")

    def reachable_soc(self, battery_efficiency: float) -> float:
        """Highest SOC attainable by leaving time charging flat out."""
        return min(self.capacity_kwh, self.initial_soc_kwh
                   + battery_efficiency * self.max_rate_kwh_per_slot * self.stay_length)

    def target_reachable(self, battery_efficiency: float) -> bool:
        return self.reachable_soc(battery_efficiency) >= self.target_soc_kwh - 1e-9


@dataclass(frozen=True)
class ChargePlan:
    """Per-slot charge and SOC for one vehicle over the whole grid (index 0 = slot 1)."""

    charge_kwh: Tuple[float, ...]
    soc_kwh: Tuple[float, ...]
    target_reachable: bool = True
    treated_as_premium: bool = False


def _soc_trajectory(spec: EvSpec, charge: Sequence[float], mu: float, grid: TimeGrid):
    soc = []
    s = spec.initial_soc_kwh
    for t in grid.slots:
        if spec.arrive_slot < t <= spec.leave_slot:
            s = s + mu * charge[t - 1]
        soc.append(s)
    return soc


def premium_schedule(spec: EvSpec, battery_efficiency: float, grid: TimeGrid) -> ChargePlan:
    """Charge at the maximum rate from arrival until the target is met.

    The slot that reaches the target is truncated so SOC lands on it exactly.
    Unreachable targets give flat-out charging and ``target_reachable=False``.
    """
    spec.check_grid(grid)
    mu = check_fraction(battery_efficiency, "battery_efficiency", open_low=True)
    charge = [0.0] * grid.slot_count
    soc = [0.0] * grid.slot_count
    s = spec.initial_soc_kwh
    for t in grid.slots:
        if spec.arrive_slot < t <= spec.leave_slot:
            need = (spec.target_soc_kwh - s) / mu
            if need > _TOL:
                if need <= spec.max_rate_kwh_per_slot:
                    charge[t - 1] = need
                    s = spec.target_soc_kwh
                else:
                    charge[t - 1] = spec.max_rate_kwh_per_slot
                    s = s + mu * spec.max_rate_kwh_per_slot
        soc[t - 1] = s
    return ChargePlan(tuple(charge), tuple(soc),
                      target_reachable=s >= spec.target_soc_kwh - 1e-9)


def conservative_rate(spec: EvSpec, battery_efficiency: float) -> float:
    """Constant per-slot charge that reaches the target exactly at leaving time.

    Divided by the battery efficiency so the SOC update actually lands on
    the target.
    """
    mu = check_fraction(battery_efficiency, "battery_efficiency", open_low=True)
    stay = spec.leave_slot - spec.arrive_slot
    if stay <= 0:
        raise ValidationError(f"{spec.id}: zero stay duration")
    return max(0.0, spec.target_soc_kwh - spec.initial_soc_kwh) / (mu * stay)


def conservative_schedule(spec: EvSpec, battery_efficiency: float, grid: TimeGrid) -> ChargePlan:
    spec.check_grid(grid)
    rate = conservative_rate(spec, battery_efficiency)
    if rate > spec.max_rate_kwh_per_slot + _TOL:
        plan = premium_schedule(spec, battery_efficiency, grid)
        return replace(plan, treated_as_premium=True)
    charge = [rate if t in spec.stay_slots else 0.0 for t in grid.slots]
    soc = _soc_trajectory(spec, charge, battery_efficiency, grid)
    if rate > 0:
        # Pin the trajectory end on the target against rounding drift.
        for t in range(spec.leave_slot, grid.slot_count + 1):
            soc[t - 1] = spec.target_soc_kwh
    return ChargePlan(tuple(charge), tuple(soc))


@dataclass(frozen=True)
class FixedPlan:
    spec: EvSpec
    plan: ChargePlan
    price_cents_per_kwh: Tuple[float, ...]
    rate_kwh_per_slot: Optional[float] = None

    @property
    def cost_cents(self) -> float:
        return float(np.dot(self.plan.charge_kwh, self.price_cents_per_kwh))


@dataclass(frozen=True)
class FixedLoadProfile:
    """Charging of every non-green EV, with per-slot totals."""

    plans: Dict[str, FixedPlan]
    demand_kwh: Tuple[float, ...]
    revenue_cents: Tuple[float, ...]
    premium_revenue_cents: float = 0.0
    conservative_revenue_cents: float = 0.0
    warnings: Tuple[str, ...] = ()


def build_fixed_load(fleet: Sequence[EvSpec], prices: PriceCurve, params: TariffParams,
                     battery_efficiency: float, grid: TimeGrid) -> FixedLoadProfile:
    if len(prices) != grid.slot_count:
        raise ValidationError("price curve length does not match the time grid")
    p_s = premium_prices(prices, params)
    demand = np.zeros(grid.slot_count)
    revenue = np.zeros(grid.slot_count)
    by_class = {EvClass.PREMIUM: 0.0, EvClass.CONSERVATIVE: 0.0}
    plans: Dict[str, FixedPlan] = {}
    notes: List[str] = []
    for spec in fleet:
        if spec.ev_class is EvClass.GREEN:
            continue
        rate = None
        if spec.ev_class is EvClass.PREMIUM:
            plan = premium_schedule(spec, battery_efficiency, grid)
            price = p_s.copy()
        else:
            plan = conservative_schedule(spec, battery_efficiency, grid)
            if plan.treated_as_premium:
                price = p_s.copy()
                notes.append(f"{spec.id}: average rate exceeds max rate; treated as premium")
            else:
                rate = conservative_rate(spec, battery_efficiency)
                price = np.array([
                    conservative_price(p, params.conservative_spread_cents,
                                       spec.max_rate_kwh_per_slot, rate) for p in p_s])
        if not plan.target_reachable:
            notes.append(f"{spec.id}: target SOC unreachable; charging at max rate throughout")
        charge = np.array(plan.charge_kwh)
        demand += charge
        revenue += charge * price
        by_class[spec.ev_class] += float(charge @ price)
        plans[spec.id] = FixedPlan(spec, plan, tuple(price.tolist()), rate)
    for note in notes:
        logger.warning(note)
    return FixedLoadProfile(plans, tuple(demand.tolist()), tuple(revenue.tolist()),
                            by_class[EvClass.PREMIUM], by_class[EvClass.CONSERVATIVE],
                            tuple(notes))
