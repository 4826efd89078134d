"""Command line interface.

Subcommands:
  plan      solve an instance and write timed plans
  validate  check a plan file against its instance
  simulate  replay plans through a command method and report tracking error
  bench     batch plan + simulate every instance in a scenario directory

Exit codes are disjoint so scripts can tell failure modes apart:
  0 success, 2 usage error, 3 malformed input, 4 no solution,
  5 solver limit exceeded, 6 plan validation failed, 7 simulation failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .ccbs import LIMIT_EXCEEDED, NO_SOLUTION, SOLVED, SolveLimits, ccbs_solve
from .flightsim import METHODS, SimConfig, error_metrics, run_execution
from .plan import PlanFormatError, load_plans, save_plans, validate
from .world import InstanceError, load_instance

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BAD_INPUT = 3
EXIT_NO_SOLUTION = 4
EXIT_LIMIT = 5
EXIT_INVALID_PLAN = 6
EXIT_SIM_FAILED = 7


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(out_dir: Path, command: str, inputs: dict, outputs: Sequence[str], extra: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "inputs": {name: {"path": str(p), "sha256": _sha256(Path(p))} for name, p in inputs.items()},
        "outputs": {name: _sha256(out_dir / name) for name in outputs},
    }
    manifest.update(extra)
    _write_json(out_dir / "manifest.json", manifest)


def _load_instance(path: str):
    try:
        return load_instance(path)
    except FileNotFoundError as exc:
        raise CliError(f"instance file not found: {path}", EXIT_BAD_INPUT) from exc
    except InstanceError as exc:
        raise CliError(f"invalid instance {path}: {exc}", EXIT_BAD_INPUT) from exc


def _load_plans(path: str):
    try:
        return load_plans(path)
    except FileNotFoundError as exc:
        raise CliError(f"plan file not found: {path}", EXIT_BAD_INPUT) from exc
    except PlanFormatError as exc:
        raise CliError(f"invalid plan file {path}: {exc}", EXIT_BAD_INPUT) from exc


def _load_config(path: Optional[str], seed: Optional[int]) -> SimConfig:
    kwargs: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise CliError(f"config file not found: {path}", EXIT_BAD_INPUT) from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"config file {path} is not valid JSON: {exc}", EXIT_BAD_INPUT) from exc
        if not isinstance(raw, dict):
            raise CliError(f"config file {path} must hold a JSON object", EXIT_BAD_INPUT)
        allowed = {f.name for f in dataclasses.fields(SimConfig)}
        unknown = set(raw) - allowed
        if unknown:
            raise CliError(
                f"config file {path} has unknown keys: {', '.join(sorted(unknown))}", EXIT_BAD_INPUT
            )
        kwargs.update(raw)
    for key in ("arena_min", "arena_max"):
        if key in kwargs:
            kwargs[key] = tuple(float(v) for v in kwargs[key])
    if seed is not None:
        kwargs["seed"] = seed
    try:
        return SimConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad simulation config: {exc}", EXIT_BAD_INPUT)


def _config_dict(config: SimConfig) -> dict:
    payload = dataclasses.asdict(config)
    payload["arena_min"] = list(payload["arena_min"])
    payload["arena_max"] = list(payload["arena_max"])
    return payload


def _config_hash(config: SimConfig) -> str:
    blob = json.dumps(_config_dict(config), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def cmd_plan(args: argparse.Namespace) -> int:
    world, agents = _load_instance(args.instance)
    limits = SolveLimits(max_wall_time=args.time_limit, max_expansions=args.expansions_limit)
    result = ccbs_solve(world, agents, limits)
    stats = result.stats
    print(
        f"solver: {result.status} expansions={stats.expansions} "
        f"conflicts={stats.conflicts_resolved} wall={stats.wall_time:.3f}s"
    )
    if result.status == NO_SOLUTION:
        print(f"no solution: {result.detail}")
        return EXIT_NO_SOLUTION
    if result.status == LIMIT_EXCEEDED:
        print(f"limit exceeded: {result.detail}")
        return EXIT_LIMIT
    solution = result.solution
    assert solution is not None
    report = validate(solution.plans, agents, world)
    if not report.ok:
        print("solver output failed independent validation:")
        print(report.summary())
        return EXIT_INVALID_PLAN
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_plans(solution.plans, agents, out)
    print(f"cost={solution.cost!r} makespan={solution.makespan!r}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    world, agents = _load_instance(args.instance)
    planset = _load_plans(args.plans)
    try:
        report = validate(planset.plans, agents, world)
    except ValueError as exc:
        raise CliError(f"plans do not match instance: {exc}", EXIT_BAD_INPUT)
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_INVALID_PLAN


def cmd_simulate(args: argparse.Namespace) -> int:
    planset = _load_plans(args.plans)
    config = _load_config(args.config, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = run_execution(planset.plans, args.method, config, speeds=planset.speeds)
    report = error_metrics(log)
    log.write_csv(out_dir / "poses.csv")
    (out_dir / "error_series.csv").write_text(report.series_csv(), encoding="utf-8")
    _write_json(out_dir / "errors.json", report.to_json_dict(config_hash=_config_hash(config)))
    _write_manifest(
        out_dir,
        "simulate",
        {"plans": args.plans},
        ["poses.csv", "error_series.csv", "errors.json"],
        {"method": args.method, "config": _config_dict(config), "completed": log.completed},
    )
    print(
        f"method={log.method} seed={log.seed} completed={log.completed} "
        f"end={log.end_time:.3f}s records={len(log.records)}"
    )
    print(
        f"tracking error: max={report.aggregate.max_error:.4f} m "
        f"avg={report.aggregate.avg_error:.4f} m"
    )
    if not log.completed:
        print("simulation hit the wall-time cap before all vehicles reached their goals")
        return EXIT_SIM_FAILED
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    """Batch plan + simulate every instance in a scenario directory.

    Per-scenario failures are recorded in the summary and the batch continues;
    the exit status is nonzero if anything failed.
    """
    scenario_dir = Path(args.scenarios)
    if not scenario_dir.is_dir():
        raise CliError(f"scenario directory not found: {scenario_dir}", EXIT_BAD_INPUT)
    instance_paths = sorted(scenario_dir.glob("*.json"))
    if not instance_paths:
        raise CliError(f"no instance files (*.json) in {scenario_dir}", EXIT_BAD_INPUT)
    base = _load_config(args.config, args.seed)
    methods = args.methods.split(",") if args.methods else list(METHODS)
    for m in methods:
        if m not in METHODS:
            raise CliError(f"unknown method {m!r}; expected subset of {','.join(METHODS)}", EXIT_USAGE)
    if args.repetitions < 1:
        raise CliError(f"repetitions must be >= 1, got {args.repetitions}", EXIT_USAGE)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    limits = SolveLimits(max_wall_time=args.time_limit, max_expansions=args.expansions_limit)

    rows: list[dict] = []
    failures: list[dict] = []
    outputs = ["bench.json"]
    for path in instance_paths:
        name = path.stem
        try:
            world, agents = _load_instance(str(path))
        except CliError as exc:
            failures.append({"scenario": name, "stage": "load", "error": str(exc)})
            print(f"{name}: FAILED to load ({exc})")
            continue
        result = ccbs_solve(world, agents, limits)
        if result.solution is None:
            failures.append({"scenario": name, "stage": "plan", "error": f"{result.status}: {result.detail}"})
            print(f"{name}: solver {result.status}")
            continue
        solution = result.solution
        report = validate(solution.plans, agents, world)
        if not report.ok:
            failures.append({"scenario": name, "stage": "validate", "error": report.summary()})
            print(f"{name}: solution failed validation")
            continue
        plan_file = f"{name}_plans.json"
        save_plans(solution.plans, agents, out_dir / plan_file)
        outputs.append(plan_file)
        speeds = {a.id: a.speed for a in agents}
        for m in methods:
            completed = 0
            max_errors: list[float] = []
            avg_errors: list[float] = []
            for rep in range(args.repetitions):
                config = dataclasses.replace(base, seed=base.seed + rep)
                log = run_execution(solution.plans, m, config, speeds=speeds)
                errors = error_metrics(log)
                if log.completed:
                    completed += 1
                else:
                    failures.append(
                        {"scenario": name, "stage": "simulate", "method": m, "seed": config.seed,
                         "error": "wall-time cap reached before all vehicles finished"}
                    )
                max_errors.append(errors.aggregate.max_error)
                avg_errors.append(errors.aggregate.avg_error)
            rows.append(
                {
                    "scenario": name,
                    "method": m,
                    "agents": len(agents),
                    "cost": solution.cost,
                    "makespan": solution.makespan,
                    "solver_wall_time": result.stats.wall_time,
                    "solver_expansions": result.stats.expansions,
                    "runs": args.repetitions,
                    "success_rate": completed / args.repetitions,
                    "mean_max_error": sum(max_errors) / len(max_errors),
                    "mean_avg_error": sum(avg_errors) / len(avg_errors),
                }
            )
            print(
                f"{name} {m}: success {completed}/{args.repetitions} "
                f"mean_max={rows[-1]['mean_max_error']:.4f} m mean_avg={rows[-1]['mean_avg_error']:.4f} m"
            )
    summary = {"repetitions": args.repetitions, "methods": methods, "rows": rows, "failures": failures}
    _write_json(out_dir / "bench.json", summary)
    _write_manifest(
        out_dir,
        "bench",
        {p.stem: str(p) for p in instance_paths},
        outputs,
        {"methods": methods, "config": _config_dict(base), "repetitions": args.repetitions},
    )
    print(f"wrote {out_dir / 'bench.json'}")
    return EXIT_OK if not failures else EXIT_SIM_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapflight",
        description="Multi-agent 3D grid path planning and quadcopter execution simulation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="solve an instance and write timed plans")
    p_plan.add_argument("--instance", required=True, help="instance JSON file")
    p_plan.add_argument("--out", required=True, help="output plan JSON file")
    p_plan.add_argument("--time-limit", type=float, default=60.0, help="solver wall-time limit, s")
    p_plan.add_argument(
        "--expansions-limit", type=int, default=200_000, help="conflict-tree expansion limit"
    )
    p_plan.set_defaults(func=cmd_plan)

    p_val = sub.add_parser("validate", help="check a plan file against its instance")
    p_val.add_argument("--instance", required=True, help="instance JSON file")
    p_val.add_argument("--plans", required=True, help="plan JSON file")
    p_val.set_defaults(func=cmd_validate)

    p_sim = sub.add_parser("simulate", help="replay plans through a command method")
    p_sim.add_argument("--plans", required=True, help="plan JSON file")
    p_sim.add_argument("--method", required=True, choices=METHODS, help="command method")
    p_sim.add_argument("--seed", type=int, default=None, help="noise seed (overrides config)")
    p_sim.add_argument("--config", default=None, help="simulation config JSON file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("bench", help="batch plan + simulate a directory of instances")
    p_bench.add_argument("--scenarios", required=True, help="directory of instance JSON files")
    p_bench.add_argument("--methods", default=None, help="comma-separated subset of bhl,bll,vll")
    p_bench.add_argument("--repetitions", type=int, default=13, help="seeded runs per (scenario, method)")
    p_bench.add_argument("--seed", type=int, default=None, help="base seed (overrides config)")
    p_bench.add_argument("--config", default=None, help="simulation config JSON file")
    p_bench.add_argument("--time-limit", type=float, default=60.0, help="solver wall-time limit, s")
    p_bench.add_argument(
        "--expansions-limit", type=int, default=200_000, help="conflict-tree expansion limit"
    )
    p_bench.add_argument("--out", required=True, help="output directory")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
