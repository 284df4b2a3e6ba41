"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 infeasible schedule,
3 deadline violation, 4 other runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import resolve_scenario, write_presets
from .errors import (
    ConfigurationError,
    DeadlineViolation,
    InfeasibleError,
    SatFLError,
    SchedulingInconsistencyError,
)
from .orbital import constellation_visibility, write_patterns_csv
from .sim import Mode, Scenario, Simulation, compare, plan_schedule, write_schedule_json

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_DEADLINE, EXIT_RUNTIME = 0, 1, 2, 3, 4

log = logging.getLogger("satfl")


def _scenario_from_args(args) -> Scenario:
    sc = resolve_scenario(args.scenario)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.slots is not None:
        overrides["slots"] = args.slots
    if args.horizon_s is not None:
        overrides["horizon_s"] = args.horizon_s
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = Mode.parse(args.mode)
    if args.strict_gu:
        overrides["strict_gu"] = True
    return replace(sc, **overrides) if overrides else sc


def _out_dir(args, sc: Scenario) -> Path:
    return Path(args.out_dir) if args.out_dir else Path("out") / sc.name


def cmd_simulate(args) -> int:
    sc = _scenario_from_args(args)
    result = Simulation(sc).run()
    paths = result.write(_out_dir(args, sc))
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    if result.truncated:
        print(f"run truncated after {len(result.rows)} slot(s): {result.truncation_reason}", file=sys.stderr)
    return EXIT_OK


def cmd_schedule(args) -> int:
    sc = _scenario_from_args(args)
    plan = plan_schedule(sc)
    out = _out_dir(args, sc)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "schedule.json"
    write_schedule_json(plan.slots, path, plan.truncated, plan.truncation_reason)
    print(path.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_visibility(args) -> int:
    sc = _scenario_from_args(args)
    vis = constellation_visibility(sc.constellation, sc.gs, sc.min_elevation_deg, sc.horizon_s, sc.step_s)
    out = _out_dir(args, sc)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "visibility.csv"
    patterns = [vis.satellites[s] for s in sorted(vis.satellites)] + [vis.clusters[p] for p in sorted(vis.clusters)]
    write_patterns_csv(patterns, path)
    print(f"visibility: {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    base = _scenario_from_args(args)
    scenarios = [replace(base, mode=Mode.parse(m)) for m in args.modes]
    table = compare(scenarios, targets=args.targets)
    out = _out_dir(args, base)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison_series.csv").write_text(table.series_csv(), encoding="utf-8")
    (out / "time_to_target.csv").write_text(table.targets_csv(), encoding="utf-8")
    print(table.targets_csv(), end="")
    return EXIT_OK


def cmd_presets(args) -> int:
    for path in write_presets(args.out_dir or "."):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="satfl", description="Scheduled federated learning over satellite clusters.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log scheduler warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_cmd(name, help_, with_mode=True):
        p = sub.add_parser(name, help=help_)
        p.add_argument("scenario", help="scenario YAML file or preset name")
        p.add_argument("--seed", type=int)
        p.add_argument("--slots", type=int)
        p.add_argument("--horizon-s", type=float)
        p.add_argument("--out-dir")
        p.add_argument("--strict-gu", action="store_true", help="require the uplink to fit in the current pass")
        if with_mode:
            p.add_argument("--mode", help="scheduled or fixed:I")
        return p

    scenario_cmd("simulate", "run training end to end").set_defaults(func=cmd_simulate)
    scenario_cmd("schedule", "compute the slot schedule without training").set_defaults(func=cmd_schedule)
    scenario_cmd("visibility", "export rise/set intervals", with_mode=False).set_defaults(func=cmd_visibility)
    cmp = scenario_cmd("compare", "run several modes and tabulate time to target accuracy", with_mode=False)
    cmp.add_argument("--modes", nargs="+", default=["scheduled", "fixed:2", "fixed:10"])
    cmp.add_argument("--targets", nargs="+", type=float)
    cmp.set_defaults(func=cmd_compare)
    pre = sub.add_parser("presets", help="write the built-in scenario files")
    pre.add_argument("--out-dir")
    pre.set_defaults(func=cmd_presets)
    return parser


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleError, SchedulingInconsistencyError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DeadlineViolation as exc:
        print(f"deadline violation: {exc}", file=sys.stderr)
        return EXIT_DEADLINE
    except SatFLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
