import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvcharge.exceptions import ValidationError
from pvcharge.fleet import EvClass
from pvcharge.scenario import (ScenarioConfig, dumps_scenario, generate_scenario,
                               load_scenario, save_scenario, scenario_to_dict,
                               with_green_fraction)


def test_default_fleet_counts(default_scenario):
    s = default_scenario
    assert len(s.fleet) == 24
    assert [s.count(c) for c in EvClass] == [8, 8, 8]
    assert s.grid.slot_count == 22 and s.grid.slot_hours == 0.5
    assert s.pv.panel_count == pytest.approx(141.569, abs=1e-3)


def test_empty_fleet():
    s = generate_scenario(ScenarioConfig(premium_count=0, conservative_count=0, green_count=0))
    assert s.fleet == ()


def test_same_seed_same_bytes():
    assert dumps_scenario(generate_scenario(seed=11)) == dumps_scenario(generate_scenario(seed=11))
    assert dumps_scenario(generate_scenario(seed=11)) != dumps_scenario(generate_scenario(seed=12))


def test_generated_fields_follow_config(default_scenario):
    for ev in default_scenario.fleet:
        assert 25 <= ev.capacity_kwh <= 40
        assert 0.2 * ev.capacity_kwh <= ev.initial_soc_kwh <= 0.3 * ev.capacity_kwh
        assert ev.target_soc_kwh == pytest.approx(0.8 * ev.capacity_kwh)
        assert ev.min_soc_kwh == pytest.approx(0.2 * ev.capacity_kwh)
        assert ev.green_floor_kwh == pytest.approx(0.4 * ev.capacity_kwh)
        assert 1 <= ev.arrive_slot < ev.leave_slot <= 22
        assert ev.target_reachable(0.9)


def test_config_invariants():
    with pytest.raises(ValidationError):
        ScenarioConfig(capacity_range_kwh=(40, 25))
    with pytest.raises(ValidationError):
        ScenarioConfig(premium_count=-1)
    with pytest.raises(ValidationError):
        ScenarioConfig(initial_soc_range=(0.1, 0.3))
    with pytest.raises(ValidationError):
        ScenarioConfig(target_soc_fraction=1.5)


@pytest.mark.parametrize("fraction, counts", [(1.0, (0, 0, 24)), (0.0, (12, 12, 0)),
                                              (0.5, (6, 6, 12))])
def test_with_green_fraction_counts(default_scenario, fraction, counts):
    s = with_green_fraction(default_scenario, fraction)
    assert tuple(s.count(c) for c in EvClass) == counts
    assert (s.config.premium_count, s.config.conservative_count, s.config.green_count) == counts


def test_with_green_fraction_rejects_out_of_range(default_scenario):
    with pytest.raises(ValidationError):
        with_green_fraction(default_scenario, 1.2)


def test_round_trip(tmp_path, default_scenario):
    path = tmp_path / "s.json"
    save_scenario(default_scenario, path)
    assert load_scenario(path) == default_scenario


def _doc_with(tmp_path, mutate):
    doc = scenario_to_dict(generate_scenario(seed=2))
    mutate(doc)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    return path


def test_missing_fleet_field_is_named(tmp_path):
    path = _doc_with(tmp_path, lambda d: d["fleet"][3].pop("capacity_kwh"))
    with pytest.raises(ValidationError, match=r"fleet\[3\].*capacity_kwh"):
        load_scenario(path)


def test_unknown_class_rejected(tmp_path):
    def mutate(d):
        d["fleet"][0]["class"] = "economy"
    with pytest.raises(ValidationError, match=r"fleet\[0\]\.class"):
        load_scenario(_doc_with(tmp_path, mutate))


def test_wrong_schema_version(tmp_path):
    def mutate(d):
        d["schema_version"] = 99
    with pytest.raises(ValidationError, match="schema_version"):
        load_scenario(_doc_with(tmp_path, mutate))


def test_csv_references(tmp_path):
    rows = "".join(f"{i},{20 + i}\n" for i in range(1, 23))
    (tmp_path / "prices.csv").write_text("slot,grid_sell_cents_per_kwh\n" + rows)
    (tmp_path / "irr.csv").write_text("slot,irradiance_w_per_m2\n" + rows)

    def mutate(d):
        d["prices"] = {"csv": "prices.csv"}
        d["irradiance"] = {"csv": "irr.csv"}
    s = load_scenario(_doc_with(tmp_path, mutate))
    assert s.prices.grid_sell_cents_per_kwh[0] == 21.0
    assert s.irradiance.values[-1] == 42.0


def test_load_missing_and_invalid(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "none.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValidationError, match="not valid JSON"):
        load_scenario(bad)


@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=1000, deadline=None)
def test_generated_invariants_hold_for_any_seed(seed):
    s = generate_scenario(seed=seed)
    assert len({ev.id for ev in s.fleet}) == 24
    for ev in s.fleet:
        assert ev.min_soc_kwh <= ev.initial_soc_kwh <= ev.capacity_kwh
        assert ev.min_soc_kwh <= ev.target_soc_kwh <= ev.capacity_kwh
        assert 1 <= ev.arrive_slot < ev.leave_slot <= s.grid.slot_count
        assert ev.target_reachable(s.battery_efficiency)


@given(seed=st.integers(min_value=0, max_value=10_000), fraction=st.floats(min_value=0, max_value=1))
@settings(max_examples=100, deadline=None)
def test_with_green_fraction_preserves_population(seed, fraction):
    base = generate_scenario(seed=seed)
    s = with_green_fraction(base, fraction)
    assert len(s.fleet) == len(base.fleet)
    greens = s.count(EvClass.GREEN)
    assert greens == int(fraction * 24 + 0.5)
    rest = 24 - greens
    assert s.count(EvClass.PREMIUM) - s.count(EvClass.CONSERVATIVE) == rest % 2
    for a, b in zip(base.fleet, s.fleet):
        assert (a.id, a.capacity_kwh, a.initial_soc_kwh, a.target_soc_kwh, a.min_soc_kwh,
                a.arrive_slot, a.leave_slot) == (b.id, b.capacity_kwh, b.initial_soc_kwh,
                                                 b.target_soc_kwh, b.min_soc_kwh,
                                                 b.arrive_slot, b.leave_slot)
