"""Day-ahead scheduling of a PV-equipped EV charging station.

Premium and conservative EVs follow fixed charging plans; green EVs may also
sell energy back, and their modes are chosen by a mixed-integer program that
minimizes the station's net cost.
"""

from .analysis import (CostReport, SeasonalComparison, SweepRow, baseline_fixed_contract,
                       cost_report, panel_sweep, penetration_sweep, seasonal_compare)
from .exceptions import InfeasibleError, NotFittedError, SolverLimitError, ValidationError
from .fleet import EvClass, EvSpec, build_fixed_load
from .milp import MilpModel, SolveOptions, Status
from .pv import IrradianceSeries, PvArray, TimeGrid, panels_for_spaces, station_generation
from .scenario import (Scenario, ScenarioConfig, generate_scenario, load_scenario,
                       save_scenario, with_green_fraction)
from .scheduler import (Schedule, StationScheduler, evaluate_early_leaving, optimize,
                        validate_schedule)
from .tariff import PriceCurve, TariffParams

__version__ = "0.1.0"

__all__ = [
    "CostReport", "EvClass", "EvSpec", "InfeasibleError", "IrradianceSeries", "MilpModel",
    "NotFittedError", "PriceCurve", "PvArray", "Scenario", "ScenarioConfig", "Schedule",
    "SeasonalComparison", "SolveOptions", "SolverLimitError", "StationScheduler", "Status",
    "SweepRow", "TariffParams", "TimeGrid", "ValidationError", "baseline_fixed_contract",
    "build_fixed_load", "cost_report", "evaluate_early_leaving", "generate_scenario",
    "load_scenario", "optimize", "panel_sweep", "panels_for_spaces", "penetration_sweep",
    "save_scenario", "seasonal_compare", "station_generation", "validate_schedule",
    "with_green_fraction",
]
