"""Command line entry point.

Exit codes: 0 success, 1 task failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .fixtures import fixture_bytes
from .harness.backend import BackendError
from .harness.bench import BenchmarkConfig, results_json, results_table, run_benchmark
from .harness.render import render_trajectory
from .nav_agent import EpisodeConfig, run_episode
from .perception import NoiseModel
from .planner import NavPlan, NavTask, PlanError, format_plan, plan, plan_to_json, render_hcot_prompt
from .priori_map import MapSpecError, PrioriMapSpec, load_map_spec, render_annotated_map, render_semantic_text, segment_path
from .world_sim import DIFFICULTIES, GeometryError, InfeasibleTaskError, Task, build_world, generate_map, generate_tasks

EXIT_OK, EXIT_TASK_FAILURE, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _read(path: str) -> bytes:
    if path.startswith("fixture:"):
        return fixture_bytes(path.split(":", 1)[1])
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def _spec(path: str) -> PrioriMapSpec:
    return load_map_spec(_read(path))


def _json(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_parse_map(args) -> int:
    m = segment_path(_spec(args.spec))
    _write(render_annotated_map(m) if args.emit == "svg" else render_semantic_text(m), args.out)
    return EXIT_OK


def cmd_plan(args) -> int:
    m = segment_path(_spec(args.spec))
    task = NavTask(args.start, args.target, args.heading)
    if args.emit == "prompt":
        _write(render_hcot_prompt(m, task), args.out)
    elif args.emit == "json":
        _write(plan_to_json(plan(m, task)) + "\n", args.out)
    else:
        _write(format_plan(plan(m, task)) + "\n", args.out)
    return EXIT_OK


def _load_task(path: str, index: int) -> Task:
    data = _json(path)
    if isinstance(data, list):
        if not 0 <= index < len(data):
            raise InputError(f"task index {index} out of range for {len(data)} task(s)")
        data = data[index]
    try:
        return Task.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed task ({exc})") from exc


def cmd_simulate(args) -> int:
    spec = _spec(args.spec)
    world, m = build_world(spec), segment_path(spec)
    task = _load_task(args.task, args.index)
    nav_plan = NavPlan.from_dict(_json(args.plan)) if args.plan else None
    config = EpisodeConfig(
        noise=NoiseModel(args.false_negative_rate, args.bearing_noise, args.seed),
        fine_refinement=not args.coarse,
    )
    record = run_episode(world, m, task, nav_plan=nav_plan, config=config, seed=args.seed)
    summary = {k: v for k, v in record.to_dict().items() if k != "trajectory"}
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    if args.events:
        Path(args.events).write_text(record.event_lines(), encoding="utf-8")
    if args.render:
        Path(args.render).write_text(render_trajectory(world, record, m), encoding="utf-8")
    return EXIT_OK if record.success else EXIT_TASK_FAILURE


def cmd_bench(args) -> int:
    data = _json(args.config)
    if not isinstance(data, dict):
        raise InputError("benchmark config must be a JSON object")
    try:
        config = BenchmarkConfig.from_dict(data)
    except TypeError as exc:
        raise InputError(f"bad benchmark config: {exc}") from exc
    results = run_benchmark(config)
    if args.out:
        Path(args.out).write_text(results_json(results), encoding="utf-8")
    sys.stdout.write(results_table(results))
    return EXIT_OK


def cmd_gen_map(args) -> int:
    params = {"room_count": args.rooms, "branch_count": args.branches, "seed": args.seed}
    if args.params:
        extra = _json(args.params)
        if not isinstance(extra, dict) or set(extra) - set(params):
            raise InputError(f"params must be an object with keys from {sorted(params)}")
        params.update(extra)
    spec = generate_map(int(params["room_count"]), int(params["branch_count"]), seed=int(params["seed"]))
    _write(spec.dumps(), args.out)
    return EXIT_OK


def cmd_gen_tasks(args) -> int:
    spec = _spec(args.spec)
    world, m = build_world(spec), segment_path(spec)
    tasks = generate_tasks(world, m, args.difficulty, args.n, seed=args.seed)
    _write(json.dumps([t.to_dict() for t in tasks], indent=2) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pmnav", description="Priori-map indoor navigation toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    spec_help = "map spec JSON path, '-' for stdin, or fixture:NAME"

    s = sub.add_parser("parse-map", help="compile a map spec into the segment graph")
    s.add_argument("spec", help=spec_help)
    s.add_argument("--emit", choices=("text", "svg"), default="text")
    s.add_argument("--out")
    s.set_defaults(func=cmd_parse_map)

    s = sub.add_parser("plan", help="plan a route and print actions")
    s.add_argument("spec", help=spec_help)
    s.add_argument("--start", required=True, help="start segment id, e.g. seg3")
    s.add_argument("--target", required=True, help="target room id")
    s.add_argument("--heading", help="initial compass heading (north/east/south/west)")
    s.add_argument("--emit", choices=("plan", "prompt", "json"), default="plan")
    s.add_argument("--out")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", help="run one episode")
    s.add_argument("spec", help=spec_help)
    s.add_argument("--task", required=True, help="task JSON (object or list)")
    s.add_argument("--index", type=int, default=0, help="task index when the file holds a list")
    s.add_argument("--plan", help="plan JSON to execute instead of the planner's")
    s.add_argument("--coarse", action="store_true", help="act on 30-degree directions only")
    s.add_argument("--false-negative-rate", type=float, default=0.0)
    s.add_argument("--bearing-noise", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--render", help="write a trajectory SVG")
    s.add_argument("--events", help="write the event log as JSON lines")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("bench", help="run a benchmark config")
    s.add_argument("config", help="benchmark config JSON")
    s.add_argument("--out", help="write machine-readable results here")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("gen-map", help="generate a random map spec")
    s.add_argument("params", nargs="?", help="optional JSON object overriding the flags")
    s.add_argument("--rooms", type=int, default=20)
    s.add_argument("--branches", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gen_map)

    s = sub.add_parser("gen-tasks", help="sample tasks of one difficulty on a map")
    s.add_argument("spec", help=spec_help)
    s.add_argument("--difficulty", choices=DIFFICULTIES, default="easy")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gen_tasks)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, MapSpecError, PlanError, GeometryError, InfeasibleTaskError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
