"""``pvcharge`` command line: generate, run, sweep, validate.

Exit codes: 0 success, 1 validation (bad parameters or schedule
violations), 2 usage, 3 infeasible, 4 file I/O, 5 solver limits hit before
any schedule was found.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from . import analysis
from .exceptions import InfeasibleError, SolverLimitError, ValidationError
from .fleet import EvClass
from .milp import SolveOptions
from .pv import PvArray, load_irradiance_csv
from .scenario import (ScenarioConfig, bundled_irradiance, dumps_scenario, generate_scenario,
                       load_scenario)
from .scheduler import (DEFAULT_OPTIONS, Schedule, SlowConvergenceWarning, optimize,
                        validate_schedule)
from .tariff import TariffParams, load_price_csv

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_IO, EXIT_LIMIT = 0, 1, 2, 3, 4, 5


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_overrides(p: argparse.ArgumentParser):
    g = p.add_argument_group("parameter overrides")
    g.add_argument("--kappa", type=float, help="PV module efficiency")
    g.add_argument("--mu", type=float, help="battery charging efficiency")
    g.add_argument("--e-max", type=float, dest="e_max", help="max EV energy per slot, kWh")
    g.add_argument("--gamma", type=float, help="conservative price spread, cents/kWh")
    g.add_argument("--eta", type=float, help="green charging discount factor")
    g.add_argument("--epsilon", type=float, help="green discharge price factor")
    g.add_argument("--rho", type=float, help="premium markup, cents/kWh")
    g.add_argument("--omega", type=float, help="grid sell/buy spread, cents/kWh")
    g.add_argument("--e-gmax", type=float, dest="e_gmax", help="grid limit per slot, kWh")
    g.add_argument("--green-floor", type=float, dest="green_floor",
                   help="green discharge floor as a fraction of capacity")


def _add_solver(p: argparse.ArgumentParser):
    g = p.add_argument_group("solver limits")
    g.add_argument("--gap", type=float, default=DEFAULT_OPTIONS.gap, help="relative gap target")
    g.add_argument("--node-limit", type=int, default=DEFAULT_OPTIONS.node_limit)
    g.add_argument("--time-limit", type=float, default=None,
                   help="seconds; results then depend on machine speed")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pvcharge",
                                     description="PV charging station trading scheduler")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random scenario file")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--out", required=True, help="scenario JSON path")
    g.add_argument("--premium", type=int, default=8)
    g.add_argument("--conservative", type=int, default=8)
    g.add_argument("--green", type=int, default=8)
    g.add_argument("--season", choices=("summer", "winter"), default="summer")
    g.add_argument("--irradiance", help="irradiance CSV (slot,irradiance_w_per_m2)")
    g.add_argument("--prices", help="price CSV (slot,grid_sell_cents_per_kwh)")
    _add_overrides(g)
    _add_common(g)

    r = sub.add_parser("run", help="optimize a scenario and write schedule and report")
    r.add_argument("scenario", help="scenario JSON path")
    r.add_argument("--out", required=True, help="output directory")
    _add_overrides(r)
    _add_solver(r)
    _add_common(r)

    s = sub.add_parser("sweep", help="green-penetration or panel-count sweep")
    s.add_argument("scenario", nargs="?", help="scenario JSON (default: generated from --seed)")
    s.add_argument("--seed", type=int, default=7)
    which = s.add_mutually_exclusive_group(required=True)
    which.add_argument("--green-fractions", type=_floats, dest="green_fractions")
    which.add_argument("--panels", type=_floats)
    s.add_argument("--out", help="CSV path (default: stdout)")
    _add_overrides(s)
    _add_solver(s)
    _add_common(s)

    v = sub.add_parser("validate", help="check a schedule against its scenario")
    v.add_argument("scenario")
    v.add_argument("schedule")
    _add_common(v)
    return parser


# -- overrides -------------------------------------------------------------------

def _tariff_changes(ns) -> dict:
    names = {"gamma": "conservative_spread_cents", "eta": "green_charge_factor",
             "epsilon": "green_discharge_factor", "rho": "markup_cents",
             "omega": "grid_spread_cents"}
    return {field: getattr(ns, arg) for arg, field in names.items()
            if getattr(ns, arg, None) is not None}


def apply_overrides(scenario, ns):
    """Apply command-line parameter overrides to a loaded scenario."""
    changes = _tariff_changes(ns)
    if changes:
        scenario = scenario.with_tariff(**changes)
    if ns.kappa is not None:
        scenario = replace(scenario, pv=replace(scenario.pv, efficiency=ns.kappa))
    cfg = {}
    if ns.mu is not None:
        cfg["battery_efficiency"] = ns.mu
    if ns.e_gmax is not None:
        cfg["grid_max_kwh_per_slot"] = ns.e_gmax
    if ns.e_max is not None:
        cfg["max_rate_kwh_per_slot"] = ns.e_max
    if ns.green_floor is not None:
        cfg["green_floor_fraction"] = ns.green_floor
    if cfg:
        scenario = replace(scenario, config=replace(scenario.config, **cfg))
    if ns.e_max is not None or ns.green_floor is not None:
        fleet = []
        for ev in scenario.fleet:
            if ns.e_max is not None:
                ev = replace(ev, max_rate_kwh_per_slot=ns.e_max)
            if ns.green_floor is not None and ev.green_floor_kwh is not None:
                ev = replace(ev, green_floor_kwh=ns.green_floor * ev.capacity_kwh)
            fleet.append(ev)
        scenario = replace(scenario, fleet=tuple(fleet))
    return scenario


def _options(ns) -> SolveOptions:
    return SolveOptions(gap=ns.gap, node_limit=ns.node_limit, time_limit=ns.time_limit)


def _emit(ns, human: str, payload: dict):
    if ns.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(human, end="" if human.endswith("\n") else "\n")


# -- commands --------------------------------------------------------------------

def cmd_generate(ns) -> int:
    config = ScenarioConfig(premium_count=ns.premium, conservative_count=ns.conservative,
                            green_count=ns.green, seed=ns.seed)
    cfg = {}
    if ns.mu is not None:
        cfg["battery_efficiency"] = ns.mu
    if ns.e_gmax is not None:
        cfg["grid_max_kwh_per_slot"] = ns.e_gmax
    if ns.e_max is not None:
        cfg["max_rate_kwh_per_slot"] = ns.e_max
    if ns.green_floor is not None:
        cfg["green_floor_fraction"] = ns.green_floor
    config = replace(config, **cfg)
    tariff = replace(TariffParams(), **_tariff_changes(ns))
    irradiance = (load_irradiance_csv(ns.irradiance) if ns.irradiance
                  else bundled_irradiance(ns.season))
    prices = load_price_csv(ns.prices, tariff.grid_spread_cents) if ns.prices else None
    kwargs = dict(irradiance=irradiance, prices=prices, tariff=tariff, label=ns.season)
    scenario = generate_scenario(config, **kwargs)
    if ns.kappa is not None:
        scenario = replace(scenario, pv=PvArray(ns.kappa, scenario.pv.panel_area_m2,
                                                scenario.pv.panel_count))
    Path(ns.out).write_text(dumps_scenario(scenario), encoding="utf-8")
    counts = {cls.value: scenario.count(cls) for cls in EvClass}
    demand = sum(ev.target_soc_kwh - ev.initial_soc_kwh for ev in scenario.fleet)
    human = (f"wrote {ns.out}: {len(scenario.fleet)} EVs "
             f"({', '.join(f'{v} {k}' for k, v in counts.items())}), "
             f"total SOC demand {demand:.2f} kWh")
    _emit(ns, human, {"path": ns.out, "counts": counts, "demand_kwh": demand,
                      "seed": scenario.config.seed})
    return EXIT_OK


def _optimize(scenario, ns) -> Schedule:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SlowConvergenceWarning)
        schedule = optimize(scenario, _options(ns))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return schedule


def cmd_run(ns) -> int:
    scenario = apply_overrides(load_scenario(ns.scenario), ns)
    schedule = _optimize(scenario, ns)
    for note in schedule.warnings:
        print(f"note: {note}", file=sys.stderr)
    violations = validate_schedule(scenario, schedule)
    report = analysis.cost_report(schedule, scenario)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "schedule.json").write_text(json.dumps(schedule.to_dict(), indent=2) + "\n",
                                       encoding="utf-8")
    (out / "flows.csv").write_text(schedule.to_csv(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                                     encoding="utf-8")
    payload = report.to_dict()
    payload["violations"] = [str(v) for v in violations]
    payload["out"] = str(out)
    _emit(ns, report.to_text(), payload)
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_VALIDATION if violations else EXIT_OK


def cmd_sweep(ns) -> int:
    if ns.scenario:
        scenario = load_scenario(ns.scenario)
    else:
        scenario = generate_scenario(seed=ns.seed)
    scenario = apply_overrides(scenario, ns)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SlowConvergenceWarning)
        if ns.green_fractions is not None:
            rows = analysis.penetration_sweep(scenario, ns.green_fractions, _options(ns))
            label = "green_fraction"
        else:
            rows = analysis.panel_sweep(scenario, ns.panels, _options(ns))
            label = "panels"
    for msg in sorted({str(w.message) for w in caught}):
        print(f"warning: {msg}", file=sys.stderr)
    text = analysis.sweep_csv(rows)
    if ns.out:
        Path(ns.out).write_text(text, encoding="utf-8")
    payload = {"param": label, "rows": [dict(zip(analysis.SWEEP_COLUMNS, r.as_tuple()),
                                              status=r.status, gap=r.gap) for r in rows],
               "note": analysis.WATERMARK}
    if ns.json:
        _emit(ns, "", payload)
    elif ns.out:
        print(analysis.sweep_text(rows, label), end="")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_validate(ns) -> int:
    scenario = load_scenario(ns.scenario)
    path = Path(ns.schedule)
    if not path.is_file():
        raise FileNotFoundError(f"no such schedule file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    schedule = Schedule.from_dict(doc)
    violations = validate_schedule(scenario, schedule)
    human = "schedule is valid" if not violations else "\n".join(str(v) for v in violations)
    _emit(ns, human, {"valid": not violations, "violations": [
        {"family": v.family, "message": v.message, "slot": v.slot, "ev_id": v.ev_id,
         "amount": v.amount} for v in violations]})
    return EXIT_OK if not violations else EXIT_VALIDATION


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "sweep": cmd_sweep,
            "validate": cmd_validate}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[ns.command](ns)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverLimitError as exc:
        print(f"solver limit: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
