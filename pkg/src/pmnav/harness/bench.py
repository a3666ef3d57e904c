"""Benchmark orchestration: tasks x conditions -> aggregated metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any

from ..fixtures import fixture_bytes
from ..nav_agent import EpisodeConfig, TrialRecord, run_episode
from ..perception import NoiseModel
from ..planner import NavTask, plan, render_hcot_prompt
from ..priori_map import load_map_spec, render_annotated_map, segment_path
from ..world_sim import DIFFICULTIES, build_world, generate_map, generate_tasks
from .metrics import SdfMode, summarize

CONDITIONS = {"fine": True, "coarse": False}


@dataclass(frozen=True)
class BenchmarkConfig:
    fixture: str | None = None
    room_count: int = 24
    branch_count: int = 3
    map_seeds: tuple[int, ...] = (100,)
    difficulties: tuple[str, ...] = DIFFICULTIES
    trials: int = 10  # per difficulty per map
    conditions: tuple[str, ...] = ("fine",)
    noise: NoiseModel = field(default_factory=NoiseModel)
    sdf_mode: str = SdfMode.AS_WRITTEN.value
    task_seed: int = 0
    localize: bool = False
    backend: str = "oracle"
    endpoint: str | None = None
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for d in self.difficulties:
            if d not in DIFFICULTIES:
                raise ValueError(f"unknown difficulty {d!r}")
        for c in self.conditions:
            if c not in CONDITIONS:
                raise ValueError(f"unknown condition {c!r}; expected one of {sorted(CONDITIONS)}")
        SdfMode(self.sdf_mode)
        if self.backend not in ("oracle", "external"):
            raise ValueError("backend must be 'oracle' or 'external'")
        if self.backend == "external" and not self.endpoint:
            raise ValueError("external backend needs an endpoint")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BenchmarkConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "noise" in data:
            data["noise"] = NoiseModel(**data["noise"])
        for key in ("map_seeds", "difficulties", "conditions"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        for key in ("map_seeds", "difficulties", "conditions"):
            out[key] = list(out[key])
        return out


def _scenes(config: BenchmarkConfig):
    if config.fixture:
        specs = [(config.fixture, load_map_spec(fixture_bytes(config.fixture)))]
    else:
        specs = [(f"gen{s}", generate_map(config.room_count, config.branch_count, seed=s)) for s in config.map_seeds]
    for name, spec in specs:
        yield name, build_world(spec), segment_path(spec)


def _external_plan(config: BenchmarkConfig, m, task):
    from .backend import request_plan

    nav_task = NavTask(task.start_segment, task.target_room, task.initial_heading)
    return request_plan(m, render_hcot_prompt(m, nav_task), render_annotated_map(m), config.endpoint, config.timeout)


def _trial_row(map_name: str, condition: str, index: int, r: TrialRecord) -> dict[str, Any]:
    return {
        "map": map_name,
        "condition": condition,
        "difficulty": r.difficulty,
        "index": index,
        "target": r.target_room,
        "success": r.success,
        "phase": r.phase,
        "path_length": round(r.path_length, 6),
        "shortest_length": round(r.shortest_length, 6),
        "detections": r.detections_made,
        "steps": r.steps_used,
    }


def run_benchmark(config: BenchmarkConfig) -> dict[str, Any]:
    """Run every (difficulty x condition) cell; deterministic under the oracle backend."""
    records: dict[tuple[str, str], list[TrialRecord]] = {}
    rows = []
    for k, (map_name, world, m) in enumerate(_scenes(config)):
        for difficulty in config.difficulties:
            tasks = generate_tasks(world, m, difficulty, config.trials, seed=config.task_seed + k)
            if config.localize:
                tasks = [_without_segment(t) for t in tasks]
            for condition in config.conditions:
                ep = EpisodeConfig(noise=config.noise, fine_refinement=CONDITIONS[condition])
                for i, task in enumerate(tasks):
                    nav_plan = None
                    if config.backend == "external":
                        nav_plan = _external_plan(config, m, task)
                    r = run_episode(world, m, task, nav_plan=nav_plan, config=ep, seed=i)
                    records.setdefault((difficulty, condition), []).append(r)
                    rows.append(_trial_row(map_name, condition, i, r))
    cells = []
    for difficulty in config.difficulties:
        for condition in config.conditions:
            stats = summarize(records[(difficulty, condition)], config.sdf_mode)
            cells.append({"difficulty": difficulty, "condition": condition, **{k: _r(v) for k, v in stats.items()}})
    return {"config": config.to_dict(), "cells": cells, "trials": rows}


def _without_segment(task):
    from dataclasses import replace

    return replace(task, start_segment="")


def _r(v: float) -> float:
    return round(float(v), 6)


def results_json(results: dict[str, Any]) -> str:
    return json.dumps(results, indent=2, sort_keys=True) + "\n"


def results_table(results: dict[str, Any]) -> str:
    """Aligned text table: one row per condition, SR/SPL/SDF per difficulty."""
    cells = results["cells"]
    difficulties = list(dict.fromkeys(c["difficulty"] for c in cells))
    conditions = list(dict.fromkeys(c["condition"] for c in cells))
    lookup = {(c["difficulty"], c["condition"]): c for c in cells}
    header = ["condition"] + [f"{d}:{m}" for d in difficulties for m in ("SR", "SPL", "SDF")]
    body = []
    for cond in conditions:
        row = [cond]
        for d in difficulties:
            c = lookup[(d, cond)]
            row += [f"{c['sr']:.1f}", f"{c['spl']:.1f}", f"{c['sdf']:.1f}"]
        body.append(row)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(r, widths))) for r in [header] + body]
    return "\n".join(line.rstrip() for line in lines) + "\n"
