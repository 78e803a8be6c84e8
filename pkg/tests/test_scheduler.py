import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from conftest import small_scenario
from oracles import brute_force_station
from pvcharge import milp
from pvcharge.exceptions import InfeasibleError, NotFittedError, ValidationError
from pvcharge.fleet import EvClass, EvSpec, build_fixed_load
from pvcharge.milp import SolveOptions
from pvcharge.scenario import ScenarioConfig
from pvcharge.scheduler import (Schedule, SlowConvergenceWarning, StationScheduler,
                                build_model, evaluate_early_leaving, optimize,
                                validate_schedule)

EXACT = SolveOptions(gap=1e-9)


def tiny_scenario(rng, slots=4, greens=1, with_fixed=False):
    """Random instance small enough for the brute-force oracle."""
    fleet = []
    for i in range(greens):
        cap = float(rng.uniform(10, 20))
        s0 = float(rng.uniform(0.2, 0.5)) * cap
        arrive = int(rng.integers(1, 3))
        fleet.append(EvSpec(
            f"g{i}", "green", cap, s0, float(rng.uniform(0.3, 0.9)) * cap, 0.2 * cap,
            arrive, slots, float(rng.uniform(2, 6)), float(rng.uniform(0.2, 0.6)) * cap))
    if with_fixed:
        fleet.append(EvSpec("p0", "premium", 20.0, 5.0, 12.0, 4.0, 1, slots, 5.0))
    irr = rng.uniform(0, 900, slots).round(1).tolist()
    sell = rng.uniform(8, 40, slots).round(2).tolist()
    return small_scenario(fleet, slot_count=slots, irradiance=irr, sell=sell,
                          panel_count=float(rng.uniform(0, 40)))


# -- model construction --------------------------------------------------------------

def test_model_counts_without_green():
    s = small_scenario([], slot_count=5)
    fixed = build_fixed_load(s.fleet, s.prices, s.tariff, 0.9, s.grid)
    model, vmap = build_model(s, fixed)
    assert model.num_variables == 15
    assert len(model.integral_indices) == 5


def test_model_counts_with_one_green_ev():
    g = EvSpec("g", "green", 20, 5, 10, 4, 1, 5, 5.0, 8.0)
    s = small_scenario([g], slot_count=5)
    fixed = build_fixed_load(s.fleet, s.prices, s.tariff, 0.9, s.grid)
    model, vmap = build_model(s, fixed)
    assert model.num_variables == 15 + 4 * 4
    assert len(model.integral_indices) == 5 + 4


def test_idle_witness_is_feasible():
    # Green EV charges at its average rate, the grid covers the residual.
    g = EvSpec("g", "green", 20, 5, 14, 4, 1, 5, 5.0, 8.0)
    s = small_scenario([g], slot_count=5, irradiance=[100.0] * 5)
    fixed = build_fixed_load(s.fleet, s.prices, s.tariff, 0.9, s.grid)
    model, vmap = build_model(s, fixed)
    gv = vmap.green["g"]
    x = np.zeros(model.num_variables)
    rate = (14 - 5) / (0.9 * 4)
    soc = 5.0
    gen = np.array([100.0 * 0.15 * s.pv.panel_area_m2 * 0.5 / 1000 * 10] * 5)
    net = -gen.copy()
    for t in gv.slots:
        soc += 0.9 * rate
        x[gv.charge[t]], x[gv.mode[t]], x[gv.soc[t]] = rate, 1.0, soc
        net[t - 1] += rate
    for t in range(5):
        if net[t] > 0:
            x[vmap.grid_import[t]] = net[t]
        else:
            x[vmap.grid_export[t]] = -net[t]
            x[vmap.grid_mode[t]] = 1.0
    assert model.violations(x, 1e-6, 1e-6) == []


def test_inconsistent_fixed_load_rejected():
    p = EvSpec("p", "premium", 20, 5, 10, 4, 1, 3, 5.0)
    s = small_scenario([p])
    empty = build_fixed_load((), s.prices, s.tariff, 0.9, s.grid)
    with pytest.raises(ValidationError):
        build_model(s, empty)


# -- optimize ------------------------------------------------------------------------

def test_empty_fleet_no_sun_costs_nothing():
    s = small_scenario([], irradiance=[0.0] * 4)
    sched = optimize(s)
    assert sched.gamma_cents == 0.0
    assert not any(sched.grid_import_kwh) and not any(sched.grid_export_kwh)


def test_empty_fleet_sells_all_generation():
    s = small_scenario([], irradiance=[100, 400, 700, 0])
    sched = optimize(s)
    gen = np.array(sched.generation_kwh)
    assert sched.grid_export_kwh == pytest.approx(gen.tolist(), abs=1e-9)
    assert sched.gamma_cents == pytest.approx(-float(s.prices.buy @ gen), abs=1e-9)


@pytest.mark.parametrize("seed", range(8))
def test_matches_brute_force_one_green(seed):
    rng = np.random.default_rng(1000 + seed)
    s = tiny_scenario(rng, slots=int(rng.integers(3, 5)), with_fixed=bool(seed % 2))
    sched = optimize(s, EXACT)
    assert sched.gamma_cents == pytest.approx(brute_force_station(s), abs=1e-6)
    assert validate_schedule(s, sched) == []


@pytest.mark.parametrize("seed", range(3))
def test_matches_brute_force_two_greens(seed):
    rng = np.random.default_rng(2000 + seed)
    s = tiny_scenario(rng, slots=3, greens=2)
    sched = optimize(s, EXACT)
    assert sched.gamma_cents == pytest.approx(brute_force_station(s), abs=1e-6)


def test_custom_solver_hook():
    rng = np.random.default_rng(5)
    s = tiny_scenario(rng)
    calls = []

    def solver(model, options):
        calls.append(model.num_variables)
        return milp.solve(model, options)
    a = optimize(s, EXACT, solver=solver)
    assert calls
    assert a.gamma_cents == pytest.approx(optimize(s, EXACT).gamma_cents, abs=1e-6)


def test_infeasible_grid_limit_names_requirement():
    p = EvSpec("p", "premium", 40, 10, 30, 8, 1, 4, 5.0)
    cfg = ScenarioConfig(premium_count=1, conservative_count=0, green_count=0,
                         grid_max_kwh_per_slot=0.5)
    s = small_scenario([p], irradiance=[0.0] * 4, config=cfg)
    with pytest.raises(InfeasibleError) as info:
        optimize(s)
    assert info.value.requirement == "energy_balance"


def test_unreachable_green_target_is_capped_with_note():
    g = EvSpec("g", "green", 40, 8, 32, 8, 1, 3, 5.0, 16.0)
    s = small_scenario([g])
    sched = optimize(s, EXACT)
    assert any("unreachable" in w for w in sched.warnings)
    assert sched.soc_kwh["g"][2] == pytest.approx(8 + 0.9 * 10)
    assert validate_schedule(s, sched) == []


def test_slow_convergence_warning():
    rng = np.random.default_rng(8)
    s = tiny_scenario(rng)
    s = s.with_tariff(green_discharge_factor=0.5)
    with pytest.warns(SlowConvergenceWarning):
        optimize(s)


def test_small_fleet_schedule_contract(small_fleet_scenario, small_fleet_schedule):
    s, sched = small_fleet_scenario, small_fleet_schedule
    assert validate_schedule(s, sched) == []
    assert sched.breakdown.total == pytest.approx(sched.gamma_cents, abs=1e-6)
    for ev in s.fleet:
        assert sched.soc_kwh[ev.id][ev.leave_slot - 1] >= ev.target_soc_kwh - 1e-6
        soc = sched.soc_kwh[ev.id]
        assert soc[: ev.arrive_slot] == pytest.approx([ev.initial_soc_kwh] * ev.arrive_slot)
    imp, exp = np.array(sched.grid_import_kwh), np.array(sched.grid_export_kwh)
    assert np.all(np.minimum(imp, exp) <= 1e-6)


# -- validate_schedule ---------------------------------------------------------------

def _copy(sched):
    return Schedule.from_dict(json.loads(json.dumps(sched.to_dict())))


def test_injected_simultaneous_flows_flagged(small_fleet_scenario, small_fleet_schedule):
    s = small_fleet_scenario
    ev = s.evs(EvClass.GREEN)[0]
    bad = _copy(small_fleet_schedule)
    t = ev.leave_slot - 1
    bad.charge_kwh[ev.id][t] += 1.0
    bad.discharge_kwh[ev.id][t] += 1.0
    fams = {v.family for v in validate_schedule(s, bad)}
    assert "ev_rate" in fams


def test_injected_low_soc_flagged(small_fleet_scenario, small_fleet_schedule):
    s = small_fleet_scenario
    ev = s.evs(EvClass.GREEN)[0]
    bad = _copy(small_fleet_schedule)
    bad.soc_kwh[ev.id][ev.arrive_slot] = ev.min_soc_kwh - 1.0
    fams = {v.family for v in validate_schedule(s, bad)}
    assert "safety_floor" in fams


def test_injected_cost_and_balance_errors(small_fleet_scenario, small_fleet_schedule):
    s = small_fleet_scenario
    bad = _copy(small_fleet_schedule)
    bad.gamma_cents += 5.0
    assert "objective" in {v.family for v in validate_schedule(s, bad)}
    bad = _copy(small_fleet_schedule)
    busy = int(np.argmax(np.array(bad.grid_import_kwh)))
    bad.grid_import_kwh[busy] -= 3.0
    assert "energy_balance" in {v.family for v in validate_schedule(s, bad)}


def test_shape_mismatch_raises(small_fleet_scenario, small_fleet_schedule):
    bad = _copy(small_fleet_schedule)
    bad.grid_mode = bad.grid_mode[:-1]
    with pytest.raises(ValidationError, match="grid_mode"):
        validate_schedule(small_fleet_scenario, bad)


def test_schedule_round_trip(small_fleet_schedule):
    again = _copy(small_fleet_schedule)
    assert again.to_dict() == small_fleet_schedule.to_dict()
    with pytest.raises(ValidationError):
        Schedule.from_dict({"status": "Optimal"})
    rows = small_fleet_schedule.to_csv().splitlines()
    assert rows[0].startswith("slot,pv_kwh,grid_import_kwh")
    assert len(rows) == 23


# -- early leaving ---------------------------------------------------------------------

def test_early_leaving_zero_is_terminal(small_fleet_scenario, small_fleet_schedule):
    res = evaluate_early_leaving(small_fleet_schedule, small_fleet_scenario, 0)
    for r in res.records:
        assert r.soc_kwh >= r.target_soc_kwh - 1e-6


def test_early_leaving_premium_full_when_done():
    p = EvSpec("p", "premium", 30, 6, 12, 6, 1, 6, 5.0)
    s = small_scenario([p], slot_count=6)
    sched = optimize(s)
    res = evaluate_early_leaving(sched, s, 2)
    assert res.records[0].soc_kwh == pytest.approx(12)
    assert res.class_average("premium") == pytest.approx(1.0)
    assert math.isnan(res.class_average("green"))


def test_early_leaving_omits_short_stays():
    p = EvSpec("p", "premium", 30, 6, 12, 6, 3, 4, 5.0)
    s = small_scenario([p], slot_count=6)
    res = evaluate_early_leaving(optimize(s), s, 2)
    assert res.records == () and res.notes
    with pytest.raises(ValidationError):
        evaluate_early_leaving(optimize(s), s, -1)


def test_early_leaving_green_floor(small_fleet_scenario, small_fleet_schedule):
    res = evaluate_early_leaving(small_fleet_schedule, small_fleet_scenario, 2)
    greens = [r for r in res.records if r.ev_class == "green"]
    assert all(r.floor_respected for r in greens)


# -- estimator facade ------------------------------------------------------------------

def test_estimator_api(small_fleet_scenario, small_fleet_schedule):
    est = StationScheduler()
    with pytest.raises(NotFittedError):
        est.predict()
    est.fit(small_fleet_scenario)
    assert est.violations_ == []
    assert est.score() == pytest.approx(-est.predict().gamma_cents)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert not hasattr(twin, "schedule_")


# -- properties on tiny instances --------------------------------------------------------

@given(seed=st.integers(min_value=0, max_value=10**6), boost=st.floats(min_value=1.0, max_value=3.0))
@settings(max_examples=15, deadline=None)
def test_more_sun_never_costs_more(seed, boost):
    s = tiny_scenario(np.random.default_rng(seed), slots=3)
    brighter = replace(s, irradiance=s.irradiance.scaled(boost))
    assert optimize(brighter, EXACT).gamma_cents <= optimize(s, EXACT).gamma_cents + 1e-6


@given(seed=st.integers(min_value=0, max_value=10**6))
@settings(max_examples=15, deadline=None)
def test_dropping_green_target_never_costs_more(seed):
    s = tiny_scenario(np.random.default_rng(seed), slots=3)
    relaxed_fleet = tuple(replace(ev, target_soc_kwh=ev.min_soc_kwh)
                          if ev.ev_class is EvClass.GREEN else ev for ev in s.fleet)
    relaxed = replace(s, fleet=relaxed_fleet)
    assert optimize(relaxed, EXACT).gamma_cents <= optimize(s, EXACT).gamma_cents + 1e-6


@given(seed=st.integers(min_value=0, max_value=10**6))
@settings(max_examples=20, deadline=None)
def test_optimized_tiny_schedules_validate(seed):
    s = tiny_scenario(np.random.default_rng(seed), slots=4, with_fixed=seed % 2 == 0)
    sched = optimize(s, EXACT)
    assert validate_schedule(s, sched) == []
    assert sched.optimal
