import numpy as np
import pytest

from conftest import small_scenario
from pvcharge.analysis import (SWEEP_COLUMNS, WATERMARK, baseline_fixed_contract, cost_report,
                               fixed_contract_scenario, panel_sweep, penetration_sweep,
                               pv_total_kwh, seasonal_compare, sweep_csv, sweep_text,
                               with_panel_count)
from pvcharge.exceptions import ValidationError
from pvcharge.fleet import EvClass, EvSpec
from pvcharge.scenario import ScenarioConfig, bundled_irradiance, generate_scenario
from pvcharge.scheduler import optimize


def test_report_empty_fleet_no_sun():
    s = small_scenario([], irradiance=[0.0] * 4)
    rep = cost_report(optimize(s), s)
    assert rep.gamma_cents == 0.0
    assert all(v is None for v in rep.class_average_cents.values())


def test_single_premium_ev_cost():
    # 18 kWh of SOC at 90% efficiency is 20 kWh bought at 25 cents.
    p = EvSpec("p", "premium", 40, 8, 26, 8, 1, 10, 5.0)
    s = small_scenario([p], slot_count=10, irradiance=[0.0] * 10, sell=[20.0] * 10)
    rep = cost_report(optimize(s), s)
    assert rep.ev_cost_cents["p"] == pytest.approx(500.0)
    assert rep.class_average_cents["premium"] == pytest.approx(500.0)
    assert rep.class_average_cents["green"] is None


def test_green_cost_formula(small_fleet_scenario, small_fleet_schedule):
    s, sched = small_fleet_scenario, small_fleet_schedule
    rep = cost_report(sched, s)
    ps = s.prices.sell + s.tariff.markup_cents
    pc = 0.75 * ps
    pd = 0.85 * pc
    for ev in s.evs(EvClass.GREEN):
        c = np.array(sched.charge_kwh[ev.id])
        d = np.array(sched.discharge_kwh[ev.id])
        assert rep.ev_cost_cents[ev.id] == pytest.approx(float(pc @ c - pd @ d), abs=1e-9)


def test_breakdown_sums_to_gamma(small_fleet_scenario, small_fleet_schedule):
    rep = cost_report(small_fleet_schedule, small_fleet_scenario)
    assert rep.breakdown.total == pytest.approx(rep.gamma_cents, abs=1e-9)
    assert rep.gamma_cents == pytest.approx(small_fleet_schedule.gamma_cents, abs=1e-6)
    # EV payments equal the charging revenue net of discharge payments
    b = rep.breakdown
    assert sum(rep.ev_cost_cents.values()) == pytest.approx(
        b.green_charging_revenue + b.premium_charging_revenue
        + b.conservative_charging_revenue - b.green_discharge_payments, abs=1e-6)


def test_report_outputs_carry_watermark(small_fleet_scenario, small_fleet_schedule):
    rep = cost_report(small_fleet_schedule, small_fleet_scenario)
    assert WATERMARK in rep.to_text()
    doc = rep.to_dict()
    assert doc["note"] == WATERMARK
    assert set(doc["class_average_cents"]) == {"premium", "conservative", "green"}


def test_panel_sweep_zero_and_linearity(small_fleet_scenario):
    rows = panel_sweep(small_fleet_scenario, [0, 40, 80])
    assert [r.param for r in rows] == [0.0, 40.0, 80.0]
    assert rows[0].pv_kwh == 0.0
    assert rows[2].pv_kwh == pytest.approx(2 * rows[1].pv_kwh)
    zero = rows[0].schedule
    demand = sum(sum(v) for v in zero.charge_kwh.values()) - sum(
        sum(v) for v in zero.discharge_kwh.values())
    assert rows[0].grid_out_kwh - rows[0].grid_in_kwh == pytest.approx(demand, abs=1e-6)
    for r in rows:
        assert min(r.grid_in_kwh, r.grid_out_kwh, r.green_discharge_kwh, r.pv_kwh) >= 0


def test_sweep_flow_conservation(small_fleet_scenario):
    for r in penetration_sweep(small_fleet_scenario, [0.0, 0.5]):
        sched = r.schedule
        charge = sum(sum(v) for v in sched.charge_kwh.values())
        assert r.pv_kwh + r.grid_out_kwh + r.green_discharge_kwh == pytest.approx(
            charge + r.grid_in_kwh, abs=1e-6)


def test_sweep_is_deterministic(small_fleet_scenario):
    a = sweep_csv(penetration_sweep(small_fleet_scenario, [0.5, 0.0]))
    b = sweep_csv(penetration_sweep(small_fleet_scenario, [0.0, 0.5]))
    assert a == b
    assert a.splitlines()[0] == ",".join(SWEEP_COLUMNS)
    assert len(a.splitlines()) == 3


def test_sweep_rejects_bad_fraction(small_fleet_scenario):
    with pytest.raises(ValidationError):
        penetration_sweep(small_fleet_scenario, [1.5])
    with pytest.raises(ValidationError):
        with_panel_count(small_fleet_scenario, -1)


def test_sweep_text_has_rows(small_fleet_scenario):
    rows = panel_sweep(small_fleet_scenario, [10])
    text = sweep_text(rows, "panels")
    assert WATERMARK in text and "panels" in text


def test_contract_price_must_be_positive(small_fleet_scenario):
    with pytest.raises(ValidationError):
        baseline_fixed_contract(small_fleet_scenario, 0.0)


def test_fixed_contract_prices_are_flat(small_fleet_scenario):
    s = fixed_contract_scenario(small_fleet_scenario, 17.0)
    assert s.count(EvClass.GREEN) == len(s.fleet)
    assert set(s.prices.grid_sell_cents_per_kwh) == {17.0}
    assert set(s.prices.grid_buy_cents_per_kwh) == {17.0}
    default = fixed_contract_scenario(small_fleet_scenario)
    assert default.prices.grid_sell_cents_per_kwh[0] == pytest.approx(
        float(np.mean(small_fleet_scenario.prices.sell)))


def test_fixed_contract_cost_depends_on_net_flows_only(small_fleet_scenario):
    price = 17.0
    s = fixed_contract_scenario(small_fleet_scenario, price)
    sched = optimize(s)
    net = 0.0
    for ev in s.fleet:
        net += sum(sched.discharge_kwh[ev.id]) - sum(sched.charge_kwh[ev.id])
    net += sum(sched.grid_import_kwh) - sum(sched.grid_export_kwh)
    assert sched.gamma_cents == pytest.approx(price * net, abs=1e-6)
    # every kWh the EVs take is PV or grid, so the net is minus the PV output
    assert net == pytest.approx(-pv_total_kwh(s), abs=1e-6)


def test_seasonal_identical_series(small_fleet_scenario):
    summer = bundled_irradiance("summer")
    res = seasonal_compare(small_fleet_scenario, summer, summer)
    assert res.summer.gamma_cents == pytest.approx(res.winter.gamma_cents, abs=1e-9)
    assert res.summer.season == "summer" and res.winter.season == "winter"


def test_small_scenario_seasonal_direction():
    s = generate_scenario(ScenarioConfig(premium_count=1, conservative_count=1, green_count=2),
                          seed=12)
    res = seasonal_compare(s, bundled_irradiance("summer"), bundled_irradiance("winter"))
    assert res.winter.gamma_cents >= res.summer.gamma_cents - 1e-6
