"""Per-unit prices in cents/kWh for the grid and the three EV classes."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from .exceptions import ValidationError
from .pv import _read_slot_csv
from .validation import check_fraction, check_non_negative

# Below this the EV-facing discharge price makes the MIP hard to close.
EPSILON_CONVERGENCE_THRESHOLD = 0.79


@dataclass(frozen=True)
class TariffParams:
    """Station pricing knobs.

    Attributes
    ----------
    markup_cents : premium markup over the grid sell price.
    conservative_spread_cents : maximum conservative reward (price swing).
    green_charge_factor : green charging discount factor on the premium price.
    green_discharge_factor : green discharge price as a fraction of green charge price.
    grid_spread_cents : gap between the grid's sell and buy prices.
    """

    markup_cents: float = 5.0
    conservative_spread_cents: float = 4.0
    green_charge_factor: float = 0.75
    green_discharge_factor: float = 0.85
    grid_spread_cents: float = 2.0

    def __post_init__(self):
        check_non_negative(markup_cents=self.markup_cents,
                           conservative_spread_cents=self.conservative_spread_cents,
                           grid_spread_cents=self.grid_spread_cents)
        check_fraction(self.green_charge_factor, "green_charge_factor", open_low=True)
        check_fraction(self.green_discharge_factor, "green_discharge_factor", open_low=True)


@dataclass(frozen=True)
class PriceCurve:
    grid_sell_cents_per_kwh: Tuple[float, ...]
    grid_buy_cents_per_kwh: Tuple[float, ...]

    def __post_init__(self):
        sell = tuple(float(v) for v in self.grid_sell_cents_per_kwh)
        buy = tuple(float(v) for v in self.grid_buy_cents_per_kwh)
        if len(sell) != len(buy):
            raise ValidationError("sell and buy curves differ in length")
        if any(not v > 0 for v in sell):
            raise ValidationError("grid sell prices must be > 0")
        if any(v < 0 for v in buy):
            raise ValidationError("grid buy prices must be >= 0")
        spreads = {round(s - b, 9) for s, b in zip(sell, buy)}
        if len(spreads) > 1:
            raise ValidationError("grid spread must be the same in every slot")
        object.__setattr__(self, "grid_sell_cents_per_kwh", sell)
        object.__setattr__(self, "grid_buy_cents_per_kwh", buy)

    @classmethod
    def from_sell(cls, sell: Sequence[float], grid_spread: float) -> "PriceCurve":
        return cls(tuple(sell), tuple(grid_buy_price(s, grid_spread) for s in sell))

    def __len__(self):
        return len(self.grid_sell_cents_per_kwh)

    @property
    def sell(self) -> np.ndarray:
        return np.array(self.grid_sell_cents_per_kwh)

    @property
    def buy(self) -> np.ndarray:
        return np.array(self.grid_buy_cents_per_kwh)


def grid_buy_price(grid_sell_price: float, grid_spread: float) -> float:
    """Price the grid pays the station per kWh."""
    check_non_negative(grid_sell_price=grid_sell_price, grid_spread=grid_spread)
    price = grid_sell_price - grid_spread
    if price < 0:
        raise ValidationError(
            f"grid buy price would be negative: {grid_sell_price} - {grid_spread}")
    return price


def premium_price(grid_sell_price: float, markup: float) -> float:
    check_non_negative(grid_sell_price=grid_sell_price, markup=markup)
    return grid_sell_price + markup


def conservative_price(premium_price: float, spread_gamma: float,
                       premium_rate: float, conservative_rate: float) -> float:
    """Rate-dependent price for a conservative EV.

    Equals ``premium_price`` when the EV charges as fast as a premium EV and
    falls to ``premium_price - spread_gamma`` as its rate goes to zero. Rates
    at or above the premium rate are billed at the premium price.
    """
    if not premium_rate > 0:
        raise ValidationError("premium_rate must be > 0")
    check_non_negative(conservative_rate=conservative_rate, spread_gamma=spread_gamma)
    if conservative_rate >= premium_rate:
        return premium_price
    return (premium_price + spread_gamma
            - 2.0 * spread_gamma * premium_rate / (premium_rate + conservative_rate))


def green_charge_price(premium_price: float, eta: float) -> float:
    check_fraction(eta, "eta", open_low=True)
    return premium_price * eta


def green_discharge_price(green_charge_price: float, epsilon: float) -> float:
    check_fraction(epsilon, "epsilon", open_low=True)
    return green_charge_price * epsilon


def premium_prices(curve: PriceCurve, params: TariffParams) -> np.ndarray:
    return curve.sell + params.markup_cents


def green_prices(curve: PriceCurve, params: TariffParams) -> Tuple[np.ndarray, np.ndarray]:
    """Per-slot green ``(charge, discharge)`` prices."""
    charge = premium_prices(curve, params) * params.green_charge_factor
    return charge, charge * params.green_discharge_factor


def load_price_csv(path: Union[str, Path], grid_spread: float = 2.0,
                   slot_count: int = None) -> PriceCurve:
    """Read ``slot,grid_sell_cents_per_kwh``; buy prices are derived."""
    sell = _read_slot_csv(path, "grid_sell_cents_per_kwh", slot_count)
    if any(v <= 0 for v in sell):
        raise ValidationError(f"{path}: grid sell prices must be > 0")
    return PriceCurve.from_sell(sell, grid_spread)
