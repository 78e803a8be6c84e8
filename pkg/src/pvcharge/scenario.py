"""Problem instances: random generation, class reassignment and JSON files.

Random draws use ``numpy.random.Generator(numpy.random.PCG64(seed))``. For each
EV, in fleet order (premium, then conservative, then green), the draws are:
capacity ``uniform(lo, hi)``, initial SOC fraction ``uniform(lo, hi)``, then
``(arrive, leave) = integers(1, T + 1, size=2)`` repeated until
``arrive < leave`` (and, when ``require_reachable_targets`` is set, until the
target is reachable at the maximum rate within the stay).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import jsonschema
import numpy as np

from .exceptions import ValidationError
from .fleet import DEFAULT_BATTERY_EFFICIENCY, DEFAULT_MAX_RATE, EvClass, EvSpec
from .pv import (DEFAULT_EFFICIENCY, PANEL_AREA_M2, IrradianceSeries, PvArray,
                 TimeGrid, load_irradiance_csv, panels_for_spaces)
from .tariff import PriceCurve, TariffParams, load_price_csv
from .validation import check_fraction

SCHEMA_VERSION = 1
RNG_ALGORITHM = "numpy.random.PCG64"
MAX_WINDOW_DRAWS = 10_000


@dataclass(frozen=True)
class ScenarioConfig:
    premium_count: int = 8
    conservative_count: int = 8
    green_count: int = 8
    capacity_range_kwh: Tuple[float, float] = (25.0, 40.0)
    initial_soc_range: Tuple[float, float] = (0.20, 0.30)
    target_soc_fraction: float = 0.80
    min_soc_fraction: float = 0.20
    green_floor_fraction: float = 0.40
    max_rate_kwh_per_slot: float = DEFAULT_MAX_RATE
    battery_efficiency: float = DEFAULT_BATTERY_EFFICIENCY
    grid_max_kwh_per_slot: float = 500.0
    seed: Optional[int] = 7
    require_reachable_targets: bool = True

    def __post_init__(self):
        object.__setattr__(self, "capacity_range_kwh", tuple(float(v) for v in self.capacity_range_kwh))
        object.__setattr__(self, "initial_soc_range", tuple(float(v) for v in self.initial_soc_range))
        for name in ("premium_count", "conservative_count", "green_count"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValidationError(f"{name} must be a non-negative integer")
        lo, hi = self.capacity_range_kwh
        if not 0 < lo <= hi:
            raise ValidationError("capacity range must satisfy 0 < low <= high")
        for name in ("target_soc_fraction", "min_soc_fraction", "green_floor_fraction"):
            check_fraction(getattr(self, name), name)
        ilo, ihi = self.initial_soc_range
        check_fraction(ilo, "initial_soc_range low")
        check_fraction(ihi, "initial_soc_range high")
        if not self.min_soc_fraction <= ilo <= ihi:
            raise ValidationError("need min_soc_fraction <= initial low <= initial high")
        if self.target_soc_fraction < self.min_soc_fraction:
            raise ValidationError("target_soc_fraction must be >= min_soc_fraction")
        if self.green_floor_fraction < self.min_soc_fraction:
            raise ValidationError("green_floor_fraction must be >= min_soc_fraction")
        if not self.max_rate_kwh_per_slot > 0:
            raise ValidationError("max_rate_kwh_per_slot must be > 0")
        check_fraction(self.battery_efficiency, "battery_efficiency", open_low=True)
        if not self.grid_max_kwh_per_slot > 0:
            raise ValidationError("grid_max_kwh_per_slot must be > 0")

    @property
    def vehicle_count(self) -> int:
        return self.premium_count + self.conservative_count + self.green_count


@dataclass(frozen=True)
class Scenario:
    grid: TimeGrid
    fleet: Tuple[EvSpec, ...]
    pv: PvArray
    irradiance: IrradianceSeries
    prices: PriceCurve
    tariff: TariffParams
    config: ScenarioConfig
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "fleet", tuple(self.fleet))
        if len(self.irradiance) != self.grid.slot_count:
            raise ValidationError("irradiance length does not match the time grid")
        if len(self.prices) != self.grid.slot_count:
            raise ValidationError("price curve length does not match the time grid")
        if abs(self.prices.sell[0] - self.prices.buy[0] - self.tariff.grid_spread_cents) > 1e-9:
            raise ValidationError("price curve spread differs from tariff grid_spread_cents")
        ids = [ev.id for ev in self.fleet]
        if len(set(ids)) != len(ids):
            raise ValidationError("fleet ids must be unique")
        for ev in self.fleet:
            ev.check_grid(self.grid)

    @property
    def battery_efficiency(self) -> float:
        return self.config.battery_efficiency

    @property
    def grid_max_kwh_per_slot(self) -> float:
        return self.config.grid_max_kwh_per_slot

    def count(self, ev_class: EvClass) -> int:
        return sum(1 for ev in self.fleet if ev.ev_class is EvClass(ev_class))

    def evs(self, ev_class: EvClass) -> List[EvSpec]:
        return [ev for ev in self.fleet if ev.ev_class is EvClass(ev_class)]

    def with_tariff(self, **changes) -> "Scenario":
        tariff = replace(self.tariff, **changes)
        prices = self.prices
        if "grid_spread_cents" in changes:
            prices = PriceCurve.from_sell(self.prices.grid_sell_cents_per_kwh,
                                          tariff.grid_spread_cents)
        return replace(self, tariff=tariff, prices=prices)


# -- bundled data ----------------------------------------------------------------

def _data_path(name: str) -> Path:
    return Path(str(resources.files("pvcharge") / "data" / name))


def bundled_irradiance(season: str = "summer") -> IrradianceSeries:
    """Synthetic stand-in irradiance curves (``"summer"`` or ``"winter"``)."""
    if season not in ("summer", "winter"):
        raise ValidationError(f"unknown season {season!r}")
    return load_irradiance_csv(_data_path(f"{season}_irradiance.csv"))


def bundled_prices(grid_spread: float = 2.0) -> PriceCurve:
    """Synthetic stand-in double-peak grid sell price curve."""
    return load_price_csv(_data_path("prices.csv"), grid_spread)


# -- generation ------------------------------------------------------------------

def _draw_window(rng, config: ScenarioConfig, grid: TimeGrid, capacity, initial):
    need = config.target_soc_fraction * capacity - initial
    for _ in range(MAX_WINDOW_DRAWS):
        arrive, leave = (int(v) for v in rng.integers(1, grid.slot_count + 1, size=2))
        if arrive >= leave:
            continue
        if config.require_reachable_targets:
            reach = config.battery_efficiency * config.max_rate_kwh_per_slot * (leave - arrive)
            if reach < need - 1e-9:
                continue
        return arrive, leave
    raise ValidationError("could not draw a feasible arrival/leave window; "
                          "targets are unreachable within the time grid")


def generate_scenario(config: ScenarioConfig = ScenarioConfig(), seed: Optional[int] = None,
                      *, grid: TimeGrid = TimeGrid(), pv: Optional[PvArray] = None,
                      irradiance: Optional[IrradianceSeries] = None,
                      prices: Optional[PriceCurve] = None,
                      tariff: TariffParams = TariffParams(),
                      vehicle_spaces: int = 24, label: str = "summer") -> Scenario:
    """Random fleet on bundled (or supplied) irradiance and prices.

    ``seed`` overrides ``config.seed``. The panel count defaults to the roof
    over ``vehicle_spaces`` bays.
    """
    if seed is not None:
        config = replace(config, seed=int(seed))
    if config.seed is None:
        raise ValidationError("a seed is required")
    rng = np.random.Generator(np.random.PCG64(config.seed))
    classes = ([EvClass.PREMIUM] * config.premium_count
               + [EvClass.CONSERVATIVE] * config.conservative_count
               + [EvClass.GREEN] * config.green_count)
    width = max(2, len(str(len(classes))))
    fleet = []
    for i, ev_class in enumerate(classes, start=1):
        capacity = float(rng.uniform(*config.capacity_range_kwh))
        initial = float(rng.uniform(*config.initial_soc_range)) * capacity
        arrive, leave = _draw_window(rng, config, grid, capacity, initial)
        fleet.append(EvSpec(
            id=f"ev{i:0{width}d}", ev_class=ev_class, capacity_kwh=capacity,
            initial_soc_kwh=initial,
            target_soc_kwh=config.target_soc_fraction * capacity,
            min_soc_kwh=config.min_soc_fraction * capacity,
            arrive_slot=arrive, leave_slot=leave,
            max_rate_kwh_per_slot=config.max_rate_kwh_per_slot,
            green_floor_kwh=config.green_floor_fraction * capacity))
    if pv is None:
        pv = PvArray(DEFAULT_EFFICIENCY, PANEL_AREA_M2, panels_for_spaces(vehicle_spaces))
    if irradiance is None:
        irradiance = bundled_irradiance("summer")
    if prices is None:
        prices = bundled_prices(tariff.grid_spread_cents)
    return Scenario(grid, tuple(fleet), pv, irradiance, prices, tariff, config, label)


def with_green_fraction(base: Scenario, fraction: float) -> Scenario:
    """Reassign classes in fleet order: green first, then premium, then conservative.

    ``floor(fraction * N + 0.5)`` EVs become green; the rest split evenly
    with any odd one out going to premium.
    """
    fraction = check_fraction(fraction, "fraction")
    n = len(base.fleet)
    greens = int(math.floor(fraction * n + 0.5))
    rest = n - greens
    premiums = (rest + 1) // 2
    fleet = []
    for i, ev in enumerate(base.fleet):
        if i < greens:
            cls = EvClass.GREEN
        elif i < greens + premiums:
            cls = EvClass.PREMIUM
        else:
            cls = EvClass.CONSERVATIVE
        floor = ev.green_floor_kwh
        if floor is None:
            floor = max(ev.min_soc_kwh, base.config.green_floor_fraction * ev.capacity_kwh)
        fleet.append(replace(ev, ev_class=cls, green_floor_kwh=floor))
    counts = dict(premium_count=premiums, conservative_count=rest - premiums,
                  green_count=greens)
    return replace(base, fleet=tuple(fleet), config=replace(base.config, **counts))


# -- files -----------------------------------------------------------------------

_NUM = {"type": "number"}
_SERIES = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}
_CSV_REF = {"type": "object", "required": ["csv"], "properties": {"csv": {"type": "string"}},
            "additionalProperties": False}

SCENARIO_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["schema_version", "grid", "pv", "irradiance", "prices", "tariff",
                 "config", "fleet"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "label": {"type": "string"},
        "generator": {"type": "object"},
        "grid": {
            "type": "object", "required": ["slot_count", "slot_hours"],
            "properties": {"slot_count": {"type": "integer", "minimum": 1},
                           "slot_hours": {"type": "number", "exclusiveMinimum": 0},
                           "start_label": {"type": "string"}},
            "additionalProperties": False},
        "pv": {
            "type": "object", "required": ["efficiency", "panel_area_m2", "panel_count"],
            "properties": {"efficiency": _NUM, "panel_area_m2": _NUM, "panel_count": _NUM},
            "additionalProperties": False},
        "irradiance": {"oneOf": [
            {"type": "object", "required": ["irradiance_w_per_m2"],
             "properties": {"irradiance_w_per_m2": _SERIES}, "additionalProperties": False},
            _CSV_REF]},
        "prices": {"oneOf": [
            {"type": "object", "required": ["grid_sell_cents_per_kwh"],
             "properties": {"grid_sell_cents_per_kwh": _SERIES,
                            "grid_buy_cents_per_kwh": _SERIES},
             "additionalProperties": False},
            _CSV_REF]},
        "tariff": {
            "type": "object",
            "required": ["markup_cents", "conservative_spread_cents", "green_charge_factor",
                         "green_discharge_factor", "grid_spread_cents"],
            "properties": {k: _NUM for k in (
                "markup_cents", "conservative_spread_cents", "green_charge_factor",
                "green_discharge_factor", "grid_spread_cents")},
            "additionalProperties": False},
        "config": {"type": "object"},
        "fleet": {"type": "array", "items": {
            "type": "object",
            "required": ["id", "class", "capacity_kwh", "initial_soc_kwh", "target_soc_kwh",
                         "min_soc_kwh", "arrive_slot", "leave_slot",
                         "max_rate_kwh_per_slot"],
            "properties": {
                "id": {"type": "string"},
                "class": {"enum": [c.value for c in EvClass]},
                "capacity_kwh": _NUM, "initial_soc_kwh": _NUM, "target_soc_kwh": _NUM,
                "min_soc_kwh": _NUM, "green_floor_kwh": {"type": ["number", "null"]},
                "arrive_slot": {"type": "integer"}, "leave_slot": {"type": "integer"},
                "max_rate_kwh_per_slot": _NUM},
            "additionalProperties": False}},
    },
    "additionalProperties": False,
}


def scenario_to_dict(s: Scenario) -> Dict[str, Any]:
    cfg = asdict(s.config)
    cfg["capacity_range_kwh"] = list(s.config.capacity_range_kwh)
    cfg["initial_soc_range"] = list(s.config.initial_soc_range)
    return {
        "schema_version": SCHEMA_VERSION,
        "label": s.label,
        "generator": {"algorithm": RNG_ALGORITHM, "seed": s.config.seed},
        "grid": asdict(s.grid),
        "pv": asdict(s.pv),
        "irradiance": {"irradiance_w_per_m2": list(s.irradiance.values)},
        "prices": {"grid_sell_cents_per_kwh": list(s.prices.grid_sell_cents_per_kwh),
                   "grid_buy_cents_per_kwh": list(s.prices.grid_buy_cents_per_kwh)},
        "tariff": asdict(s.tariff),
        "config": cfg,
        "fleet": [{
            "id": ev.id, "class": ev.ev_class.value, "capacity_kwh": ev.capacity_kwh,
            "initial_soc_kwh": ev.initial_soc_kwh, "target_soc_kwh": ev.target_soc_kwh,
            "min_soc_kwh": ev.min_soc_kwh, "green_floor_kwh": ev.green_floor_kwh,
            "arrive_slot": ev.arrive_slot, "leave_slot": ev.leave_slot,
            "max_rate_kwh_per_slot": ev.max_rate_kwh_per_slot,
        } for ev in s.fleet],
    }


def _field_path(error: jsonschema.ValidationError) -> str:
    path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in error.absolute_path)
    return path.lstrip(".") or "<root>"


def scenario_from_dict(doc: Dict[str, Any], base_dir: Optional[Path] = None) -> Scenario:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ValidationError(f"scenario file invalid at {_field_path(err)}: {err.message}")
    base_dir = base_dir or Path(".")
    grid = TimeGrid(**doc["grid"])
    tariff = TariffParams(**doc["tariff"])
    irr = doc["irradiance"]
    if "csv" in irr:
        irradiance = load_irradiance_csv(base_dir / irr["csv"], grid.slot_count)
    else:
        irradiance = IrradianceSeries(tuple(irr["irradiance_w_per_m2"]))
    pr = doc["prices"]
    if "csv" in pr:
        prices = load_price_csv(base_dir / pr["csv"], tariff.grid_spread_cents, grid.slot_count)
    else:
        prices = PriceCurve.from_sell(pr["grid_sell_cents_per_kwh"], tariff.grid_spread_cents)
        if "grid_buy_cents_per_kwh" in pr and prices.grid_buy_cents_per_kwh != tuple(
                float(v) for v in pr["grid_buy_cents_per_kwh"]):
            raise ValidationError("scenario file invalid at prices.grid_buy_cents_per_kwh: "
                                  "buy prices must equal sell minus grid_spread_cents")
    cfg = dict(doc["config"])
    try:
        config = ScenarioConfig(**cfg)
    except TypeError as exc:
        raise ValidationError(f"scenario file invalid at config: {exc}") from None
    fleet = []
    for i, rec in enumerate(doc["fleet"]):
        rec = dict(rec)
        rec["ev_class"] = rec.pop("class")
        try:
            fleet.append(EvSpec(**rec))
        except ValidationError as exc:
            raise ValidationError(f"scenario file invalid at fleet[{i}]: {exc}") from None
    return Scenario(grid, tuple(fleet), PvArray(**doc["pv"]), irradiance, prices, tariff,
                    config, doc.get("label", ""))


def dumps_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"


def save_scenario(s: Scenario, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_scenario(s), encoding="utf-8")


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such scenario file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    return scenario_from_dict(doc, path.parent)
