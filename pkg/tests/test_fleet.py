import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvcharge.exceptions import ValidationError
from pvcharge.fleet import (EvClass, EvSpec, build_fixed_load, conservative_rate,
                            conservative_schedule, premium_schedule)
from pvcharge.pv import TimeGrid
from pvcharge.scenario import ScenarioConfig, generate_scenario
from pvcharge.tariff import PriceCurve, TariffParams, conservative_price

GRID = TimeGrid()


def ev(cls="premium", cap=30.0, s0=6.0, target=24.0, smin=6.0, arrive=1, leave=20, emax=5.0,
       floor=None, ev_id="a"):
    return EvSpec(ev_id, cls, cap, s0, target, smin, arrive, leave, emax, floor)


def test_premium_schedule_hand_simulation():
    plan = premium_schedule(ev(), 1.0, GRID)
    assert plan.charge_kwh[:6] == pytest.approx([0, 5, 5, 5, 3, 0])
    assert sum(plan.charge_kwh) == pytest.approx(18)
    assert plan.soc_kwh[4] == pytest.approx(24)
    assert plan.target_reachable


def test_premium_schedule_at_target_is_idle():
    plan = premium_schedule(ev(s0=24.0), 1.0, GRID)
    assert not any(plan.charge_kwh)


def test_premium_schedule_efficiency():
    plan = premium_schedule(ev(), 0.9, GRID)
    assert sum(plan.charge_kwh) == pytest.approx(20.0)
    assert plan.soc_kwh[-1] == pytest.approx(24.0)


def test_premium_schedule_unreachable_target_flags():
    plan = premium_schedule(ev(arrive=1, leave=3), 1.0, GRID)
    assert plan.charge_kwh[1:3] == (5.0, 5.0)
    assert not plan.target_reachable


def test_conservative_rate_examples():
    spec = ev("conservative", cap=40, s0=8, target=32, smin=8, arrive=2, leave=20)
    assert conservative_rate(spec, 1.0) == pytest.approx(24 / 18)
    assert conservative_rate(spec, 0.9) == pytest.approx(1.4815, abs=1e-4)
    assert conservative_rate(ev("conservative", s0=24.0), 1.0) == 0.0


def test_conservative_schedule_constant_rate():
    spec = ev("conservative", cap=40, s0=8, target=32, smin=8, arrive=2, leave=20)
    plan = conservative_schedule(spec, 1.0, GRID)
    active = [c for c in plan.charge_kwh if c > 0]
    assert len(active) == 18
    assert active == pytest.approx([24 / 18] * 18)
    assert plan.soc_kwh[spec.leave_slot - 1] == pytest.approx(32)
    assert not plan.treated_as_premium


def test_conservative_schedule_idle_and_cap_rule():
    assert not any(conservative_schedule(ev("conservative", s0=24.0), 1.0, GRID).charge_kwh)
    fast = ev("conservative", s0=6.0, target=24.0, arrive=1, leave=4)  # needs 6 per slot
    plan = conservative_schedule(fast, 1.0, GRID)
    assert plan.treated_as_premium
    assert max(plan.charge_kwh) == 5.0


def test_evspec_invariants():
    with pytest.raises(ValidationError):
        ev(s0=40.0)
    with pytest.raises(ValidationError):
        ev(arrive=5, leave=5)
    with pytest.raises(ValidationError):
        ev(emax=0)
    with pytest.raises(ValidationError):
        ev("green", floor=None)
    with pytest.raises(ValidationError):
        ev("green", floor=2.0)
    with pytest.raises(ValueError):
        ev("economy")
    with pytest.raises(ValidationError):
        premium_schedule(ev(leave=30), 1.0, GRID)


def test_build_fixed_load_empty_and_single():
    prices = PriceCurve.from_sell([20.0] * 22, 2.0)
    empty = build_fixed_load([], prices, TariffParams(), 0.9, GRID)
    assert not any(empty.demand_kwh) and not any(empty.revenue_cents)
    single = build_fixed_load([ev()], prices, TariffParams(), 0.9, GRID)
    assert single.demand_kwh == pytest.approx(premium_schedule(ev(), 0.9, GRID).charge_kwh)


def test_build_fixed_load_matches_direct_resummation():
    s = generate_scenario(ScenarioConfig(premium_count=8, conservative_count=8, green_count=0),
                          seed=7)
    fixed = build_fixed_load(s.fleet, s.prices, s.tariff, s.battery_efficiency, s.grid)
    ps = s.prices.sell + s.tariff.markup_cents
    demand = np.zeros(22)
    revenue = np.zeros(22)
    for spec in s.fleet:
        if spec.ev_class is EvClass.PREMIUM:
            charge = np.array(premium_schedule(spec, 0.9, s.grid).charge_kwh)
            price = ps
        else:
            plan = conservative_schedule(spec, 0.9, s.grid)
            charge = np.array(plan.charge_kwh)
            rate = max(charge)
            price = ps if plan.treated_as_premium else np.array(
                [conservative_price(p, 4.0, spec.max_rate_kwh_per_slot, rate) for p in ps])
        demand += charge
        revenue += charge * price
    assert fixed.demand_kwh == pytest.approx(demand.tolist(), abs=1e-9)
    assert fixed.revenue_cents == pytest.approx(revenue.tolist(), abs=1e-9)
    assert fixed.premium_revenue_cents + fixed.conservative_revenue_cents == pytest.approx(
        revenue.sum())


@st.composite
def specs(draw):
    cap = draw(st.floats(min_value=10, max_value=60))
    smin = draw(st.floats(min_value=0, max_value=0.3)) * cap
    s0 = draw(st.floats(min_value=smin, max_value=cap))
    target = draw(st.floats(min_value=smin, max_value=cap))
    arrive = draw(st.integers(min_value=1, max_value=21))
    leave = draw(st.integers(min_value=arrive + 1, max_value=22))
    emax = draw(st.floats(min_value=0.5, max_value=10))
    return cap, smin, s0, target, arrive, leave, emax


@given(spec=specs(), mu=st.floats(min_value=0.5, max_value=1.0))
@settings(max_examples=150, deadline=None)
def test_fixed_plans_respect_rules(spec, mu):
    cap, smin, s0, target, arrive, leave, emax = spec
    prem = EvSpec("p", "premium", cap, s0, target, smin, arrive, leave, emax)
    cons = EvSpec("c", "conservative", cap, s0, target, smin, arrive, leave, emax)
    pp = premium_schedule(prem, mu, GRID)
    cp = conservative_schedule(cons, mu, GRID)
    for plan in (pp, cp):
        soc = np.array(plan.soc_kwh)
        assert np.all(np.diff(soc) >= -1e-9)
        for t in GRID.slots:
            c = plan.charge_kwh[t - 1]
            assert -1e-12 <= c <= emax + 1e-9
            if not arrive < t <= leave:
                assert c == 0.0
        if plan.target_reachable:
            assert soc[leave - 1] >= target - 1e-6
    # A premium twin is never behind its conservative twin at any slot.
    assert np.all(np.array(pp.soc_kwh) >= np.array(cp.soc_kwh) - 1e-6)
