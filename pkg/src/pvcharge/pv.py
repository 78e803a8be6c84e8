"""Rooftop photovoltaic generation per time slot."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from .exceptions import ValidationError
from .validation import check_non_negative, check_series

# Parking bay footprint and module dimensions, metres.
SPACE_WIDTH_M = 2.4
SPACE_LENGTH_M = 4.8
PANEL_WIDTH_M = 1.926
PANEL_LENGTH_M = 1.014
PANEL_AREA_M2 = PANEL_WIDTH_M * PANEL_LENGTH_M
DEFAULT_EFFICIENCY = 0.15


@dataclass(frozen=True)
class TimeGrid:
    slot_count: int = 22
    slot_hours: float = 0.5
    start_label: str = "07:00"

    def __post_init__(self):
        if int(self.slot_count) != self.slot_count or self.slot_count < 1:
            raise ValidationError("slot_count must be an integer >= 1")
        if not self.slot_hours > 0:
            raise ValidationError("slot_hours must be > 0")

    @property
    def slots(self) -> range:
        """1-based slot indices."""
        return range(1, self.slot_count + 1)


@dataclass(frozen=True)
class IrradianceSeries:
    values: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", check_series(self.values, "irradiance"))

    def __len__(self):
        return len(self.values)

    def scaled(self, factor: float) -> "IrradianceSeries":
        return IrradianceSeries(tuple(v * factor for v in self.values))


@dataclass(frozen=True)
class PvArray:
    efficiency: float = DEFAULT_EFFICIENCY
    panel_area_m2: float = PANEL_AREA_M2
    panel_count: float = 0.0

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValidationError("efficiency must be in (0, 1]")
        if not self.panel_area_m2 > 0:
            raise ValidationError("panel_area_m2 must be > 0")
        if not self.panel_count >= 0:
            raise ValidationError("panel_count must be >= 0")


@dataclass(frozen=True)
class GenerationProfile:
    energy_kwh: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "energy_kwh", check_series(self.energy_kwh, "generation"))

    @property
    def total_kwh(self) -> float:
        return float(sum(self.energy_kwh))


def panel_energy(efficiency: float, panel_area_m2: float,
                 irradiance_w_per_m2: float, slot_hours: float) -> float:
    """Energy from one module over one slot, kWh.

    Irradiance in W/m^2 times area and efficiency gives module power in W;
    integrating over ``slot_hours`` and dividing by 1000 gives kWh.
    """
    check_non_negative(efficiency=efficiency, panel_area_m2=panel_area_m2,
                       irradiance_w_per_m2=irradiance_w_per_m2, slot_hours=slot_hours)
    if efficiency > 1:
        raise ValidationError("efficiency must be <= 1")
    return efficiency * panel_area_m2 * irradiance_w_per_m2 * slot_hours / 1000.0


def station_generation(array: PvArray, irradiance: IrradianceSeries,
                       grid: TimeGrid) -> GenerationProfile:
    if len(irradiance) != grid.slot_count:
        raise ValidationError(
            f"irradiance has {len(irradiance)} samples, time grid has {grid.slot_count} slots")
    return GenerationProfile(tuple(
        panel_energy(array.efficiency, array.panel_area_m2, value, grid.slot_hours)
        * array.panel_count
        for value in irradiance.values))


def panels_for_spaces(vehicle_spaces: int) -> float:
    """Number of modules that tile the roof over ``vehicle_spaces`` bays (not rounded)."""
    if vehicle_spaces < 0:
        raise ValidationError("vehicle_spaces must be >= 0")
    return vehicle_spaces * (SPACE_WIDTH_M * SPACE_LENGTH_M) / (PANEL_WIDTH_M * PANEL_LENGTH_M)


def load_irradiance_csv(path: Union[str, Path], slot_count: int = None) -> IrradianceSeries:
    """Read a ``slot,irradiance_w_per_m2`` file with slots 1..T in order."""
    rows = _read_slot_csv(path, "irradiance_w_per_m2", slot_count)
    return IrradianceSeries(tuple(rows))


def _read_slot_csv(path, column: str, slot_count=None) -> list:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: no data rows")
        if [h.strip() for h in header] != ["slot", column]:
            raise ValidationError(f"{path}: header must be 'slot,{column}'")
        values = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                slot = int(row[0])
                value = float(row[1])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: malformed row {row!r}") from None
            if slot != len(values) + 1:
                raise ValidationError(
                    f"{path}:{lineno}: slot {slot} out of order, expected {len(values) + 1}")
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{path}:{lineno}: {column} must be finite and >= 0")
            values.append(value)
    if not values:
        raise ValidationError(f"{path}: no data rows")
    if slot_count is not None and len(values) != slot_count:
        raise ValidationError(f"{path}: {len(values)} rows, expected {slot_count}")
    return values


def generation_array(array: PvArray, irradiance: IrradianceSeries, grid: TimeGrid) -> np.ndarray:
    return np.array(station_generation(array, irradiance, grid).energy_kwh)
