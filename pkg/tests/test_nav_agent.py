from __future__ import annotations

import math
from dataclasses import replace

import pytest

from pmnav.fixtures import fixture_bytes
from pmnav.nav_agent import (
    AgentState,
    EpisodeConfig,
    ForkMismatchError,
    LocalizationFailed,
    corner_check,
    fork_select,
    localize,
    navigate_step,
    navigation_views,
    run_episode,
    segment_from_landmarks,
)
from pmnav.perception import SimulatedPerception, ViewModel
from pmnav.planner import Action, NavPlan, NavTask, PlanStep, plan
from pmnav.priori_map import load_map_spec, segment_path, spec_from_dict
from pmnav.world_sim import Pose, Task, build_world, generate_map, generate_tasks


def scene(data):
    spec = spec_from_dict(data) if isinstance(data, dict) else load_map_spec(fixture_bytes(data))
    return build_world(spec), segment_path(spec)


def corridor(rooms, length=40):
    return scene(
        {
            "meta": {},
            "rooms": rooms,
            "waypoints": [{"id": "start", "kind": "start", "pos": [0, 0]}, {"id": "end", "kind": "end", "pos": [length, 0]}],
            "path_edges": [["start", "end"]],
        }
    )


def profile_view(near: int, total: int = 10) -> ViewModel:
    rays = tuple((float(i), 1.0 if i < near else 9.0) for i in range(total))
    return ViewModel(0.0, forward_ray_profile=rays)


def test_navigation_views():
    assert navigation_views(Action.TurnLeft) == [0.0, 30.0, -30.0, 60.0, -60.0, 90.0]
    assert -90.0 not in navigation_views(Action.TurnLeft)
    assert 90.0 not in navigation_views(Action.TurnRight)
    assert len(navigation_views(Action.TurnRight)) == 6
    assert len(navigation_views(Action.GoStraight)) == 7
    assert len(navigation_views(None)) == 7


def test_corner_check_threshold():
    cfg = EpisodeConfig()
    assert corner_check(profile_view(0), cfg) == "corridor"
    assert corner_check(profile_view(10), cfg) == "corner"
    assert corner_check(profile_view(6), cfg) == "corner"  # exactly 0.6
    assert corner_check(profile_view(5), cfg) == "corridor"


def test_segment_from_fig2_landmarks():
    _, m = scene("fig2")
    assert segment_from_landmarks(m, ["room14", "room7"]) == "seg3"
    assert segment_from_landmarks(m, ["room7", "room14"]) == "seg3"


def test_localize_between_room14_and_room7():
    w, m = scene("fig2")
    seg, heading, attempts, _ = localize(m, w, Pose(7.5, 0, 0), SimulatedPerception())
    assert seg == "seg3" and attempts == 1
    assert heading in ("east", "west")


def test_localize_second_sign_after_one_step():
    far = 2 + math.sqrt(15.5**2 - 1.5**2)  # 15.5 m away at the start, 14.5 m after one step
    w, m = corridor(
        [
            {"id": "room1", "center": [5, 3.5], "door": [5, 1.5]},
            {"id": "room2", "center": [far, -3.5], "door": [far, -1.5]},
        ]
    )
    seg, _, attempts, pose = localize(m, w, Pose(2, 0, 0), SimulatedPerception())
    assert attempts == 2
    assert pose.x == pytest.approx(3.0)
    assert seg == segment_from_landmarks(m, ["room1", "room2"])


def test_localize_on_barren_map_fails():
    w, m = corridor([{"id": "room1", "center": [38, 3.5], "door": [38, 1.5]}], length=80)
    with pytest.raises(LocalizationFailed) as err:
        localize(m, w, Pose(70, 0, 0), SimulatedPerception(), EpisodeConfig(localization_budget=10))
    assert err.value.detections_made == 10


def test_single_step_toward_visible_room():
    w, m = corridor([{"id": "room1", "center": [12, 3.5], "door": [12, 1.5]}])
    state = AgentState(pose=Pose(4, 0, 0), plan=NavPlan((PlanStep("room1", Action.Stop),)))
    navigate_step(state, m, w, SimulatedPerception(), EpisodeConfig())
    assert abs(state.pose.heading - 0.0) <= 15.0 or abs(state.pose.heading - 360.0) <= 15.0
    assert state.path_length == pytest.approx(1.0)
    kinds = [e["kind"] for e in state.events]
    assert kinds[:2] == ["search", "detect"]


def test_pending_turn_fires_at_corner():
    w, m = scene(
        {
            "meta": {},
            "rooms": [{"id": "room1", "center": [6, -3.5], "door": [6, -1.5]}, {"id": "room2", "center": [22.5, 14], "door": [21.5, 14]}],
            "waypoints": [
                {"id": "start", "kind": "start", "pos": [0, 0]},
                {"id": "turn1", "kind": "turn", "pos": [20, 0]},
                {"id": "end", "kind": "end", "pos": [20, 20]},
            ],
            "path_edges": [["start", "turn1"], ["turn1", "end"]],
        }
    )
    steps = (PlanStep("room1", Action.GoStraight, ("turn1", Action.TurnLeft)), PlanStep("room2", Action.Stop))
    state = AgentState(pose=Pose(19.8, 0, 0), plan=NavPlan(steps), step_index=0, pending_prediction=("turn1", Action.TurnLeft))
    view = SimulatedPerception().capture(w, state.pose, 0.0)
    assert corner_check(view, EpisodeConfig()) == "corner"
    navigate_step(state, m, w, SimulatedPerception(), EpisodeConfig())
    assert state.pending_prediction is None
    assert state.step_index == 1
    assert "turn" in [e["kind"] for e in state.events]
    assert state.pose.heading == pytest.approx(90.0, abs=20.0)


def test_budget_exhaustion_fails():
    w, m = corridor([{"id": "room1", "center": [25, 3.5], "door": [25, 1.5]}])
    task = Task(Pose(3, 0, 0), "room1", "medium", 20, start_segment="seg1", initial_heading="east")
    record = run_episode(w, m, task, config=EpisodeConfig(step_budget=5))
    assert record.success == 0 and record.phase == "failed"
    assert record.events[-1]["kind"] == "budget_exhausted"
    assert record.steps_used == 5


@pytest.mark.parametrize("action, expected", [(Action.TakeLeftFork, 45.0), (Action.TakeRightFork, 315.0)])
def test_fork_select_on_y_fork(action, expected):
    w, m = scene("yfork")
    state = AgentState(pose=Pose(12, 0, 0), plan=NavPlan((PlanStep("branch1", action),)))
    heading = fork_select(state, m, w, SimulatedPerception(), action)
    assert abs((heading - expected + 180) % 360 - 180) <= 5.0


def test_fork_select_mismatch():
    w, m = scene(
        {
            "meta": {},
            "rooms": [],
            "waypoints": [
                {"id": "start", "kind": "start", "pos": [0, 0]},
                {"id": "branch1", "kind": "branch", "pos": [19, 0]},
                {"id": "end1", "kind": "end", "pos": [35, 0]},
                {"id": "end2", "kind": "end", "pos": [19, -14]},
            ],
            "path_edges": [["start", "branch1"], ["branch1", "end1"], ["branch1", "end2"]],
        }
    )
    state = AgentState(pose=Pose(19, 0, 0), plan=NavPlan((PlanStep("branch1", Action.TakeLeftFork),)))
    with pytest.raises(ForkMismatchError):
        fork_select(state, m, w, SimulatedPerception(), Action.TakeLeftFork)


def test_episode_success_and_determinism():
    spec = generate_map(20, 2, seed=3)
    w, m = build_world(spec), segment_path(spec)
    task = generate_tasks(w, m, "easy", 1, seed=0)[0]
    a = run_episode(w, m, task, seed=4)
    b = run_episode(w, m, task, seed=4)
    assert a.success == 1
    assert a.to_dict() == b.to_dict() and a.events == b.events
    door = w.landmark(task.target_room).pos
    assert math.dist(a.trajectory[-1].xy, door) <= 2.0


def test_wrong_room_plan_is_flagged():
    w, m = scene("fig2")
    task = Task(Pose(7.5, 0, 0), "room8", "easy", 10, start_segment="seg3", initial_heading="east")
    wrong = plan(m, NavTask("seg3", "room7", "west"))
    record = run_episode(w, m, task, nav_plan=wrong)
    assert record.success == 0
    assert "reached_wrong_target" in [e["kind"] for e in record.events]


def test_step_index_never_decreases_and_log_is_jsonl():
    spec = generate_map(24, 3, seed=101)
    w, m = build_world(spec), segment_path(spec)
    task = generate_tasks(w, m, "hard", 1, seed=2)[0]
    record = run_episode(w, m, task)
    steps = [e["step"] for e in record.events if "step" in e]
    assert steps == sorted(steps)
    import json

    assert [json.loads(line) for line in record.event_lines().splitlines()] == record.events


def test_unknown_start_segment_triggers_localization():
    spec = generate_map(24, 1, seed=8)
    w, m = build_world(spec), segment_path(spec)
    task = replace(generate_tasks(w, m, "easy", 1, seed=1)[0], start_segment="")
    record = run_episode(w, m, task)
    assert record.events[0]["kind"] == "localize"
    assert record.detections_made >= 1


@pytest.mark.parametrize("name", ["fig2", "loop", "tfork", "yfork"])
def test_every_easy_and_medium_fixture_task_succeeds(name):
    from pmnav.world_sim import InfeasibleTaskError

    w, m = scene(name)
    ran = 0
    for difficulty in ("easy", "medium"):
        try:
            tasks = generate_tasks(w, m, difficulty, 10_000, seed=0)
        except InfeasibleTaskError as exc:
            tasks = generate_tasks(w, m, difficulty, exc.found, seed=0) if exc.found else []
        for i, task in enumerate(tasks):
            record = run_episode(w, m, task, seed=i)
            assert record.success == 1, (difficulty, task.to_dict(), [e["kind"] for e in record.events][-4:])
            ran += 1
    assert ran > 0 or name == "yfork"
