import logging

import pytest

from pvcharge.pv import IrradianceSeries, PvArray, TimeGrid
from pvcharge.scenario import Scenario, ScenarioConfig, generate_scenario
from pvcharge.scheduler import optimize
from pvcharge.tariff import PriceCurve, TariffParams

# Lines recorded by the acceptance suite, printed once at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_fleet_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="pvcharge.fleet")


def small_scenario(fleet, slot_count=4, irradiance=None, sell=None, tariff=None,
                   panel_count=10.0, config=None):
    grid = TimeGrid(slot_count=slot_count)
    tariff = tariff or TariffParams()
    irradiance = irradiance if irradiance is not None else [500.0] * slot_count
    sell = sell if sell is not None else [20.0] * slot_count
    return Scenario(grid, tuple(fleet), PvArray(panel_count=panel_count),
                    IrradianceSeries(tuple(irradiance)),
                    PriceCurve.from_sell(sell, tariff.grid_spread_cents), tariff,
                    config or ScenarioConfig(premium_count=0, conservative_count=0,
                                             green_count=0), "test")


@pytest.fixture(scope="session")
def default_scenario():
    return generate_scenario()


@pytest.fixture(scope="session")
def default_schedule(default_scenario):
    return optimize(default_scenario)


@pytest.fixture(scope="session")
def small_fleet_scenario():
    """Two EVs of each class on the bundled curves; solves in a second or two."""
    return generate_scenario(ScenarioConfig(premium_count=2, conservative_count=2,
                                            green_count=2), seed=3)


@pytest.fixture(scope="session")
def small_fleet_schedule(small_fleet_scenario):
    return optimize(small_fleet_scenario)
