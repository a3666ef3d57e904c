from __future__ import annotations

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Point as ShapelyPoint

from pmnav.fixtures import fixture_bytes
from pmnav.priori_map import load_map_spec, segment_path, spec_from_dict
from pmnav.world_sim import (
    GeometryError,
    InfeasibleTaskError,
    Motion,
    MotionConfig,
    Pose,
    Task,
    build_world,
    generate_map,
    generate_tasks,
    step_robot,
    target_visible,
    task_satisfies,
    visible_landmarks,
)


def straight(rooms=(), length=20.0):
    return spec_from_dict(
        {
            "meta": {},
            "rooms": list(rooms),
            "waypoints": [{"id": "start", "kind": "start", "pos": [0, 0]}, {"id": "end", "kind": "end", "pos": [length, 0]}],
            "path_edges": [["start", "end"]],
        }
    )


def fig2():
    spec = load_map_spec(fixture_bytes("fig2"))
    return build_world(spec), segment_path(spec)


def test_straight_corridor_has_parallel_walls_3m_apart():
    w = build_world(straight())
    long_walls = [r for r in w.walls if abs(r[1] - r[3]) < 1e-9 and abs(r[0] - r[2]) > 10]
    ys = sorted({round(float(r[1]), 9) for r in long_walls})
    assert ys == [-1.5, 1.5]


def test_fig2_has_four_signs_on_walls():
    w, _ = fig2()
    assert sorted(l.room_id for l in w.landmarks) == ["room14", "room17", "room7", "room8"]
    for l in w.landmarks:
        # the sign sits on the free-space boundary and faces into the corridor
        assert w.free_space.exterior.distance(ShapelyPoint(l.pos)) < 1e-9
        probe = (l.pos[0] + 0.5 * l.normal[0], l.pos[1] + 0.5 * l.normal[1])
        assert w.is_free(probe)


def test_overlapping_rooms_raise():
    rooms = [
        {"id": "room1", "center": [6, 3.5], "door": [6, 1.5]},
        {"id": "room2", "center": [7, 3.5], "door": [7, 1.5]},
    ]
    with pytest.raises(GeometryError):
        build_world(straight(rooms))


def test_step_primitives():
    w = build_world(straight())
    p, hit = step_robot(w, Pose(0, 0, 0), Motion.Forward)
    assert (p.x, p.y, p.heading, hit) == (pytest.approx(1.0), pytest.approx(0.0), 0.0, False)
    p, _ = step_robot(w, Pose(0, 0, 90), Motion.RotateLeft, 90)
    assert p.heading == pytest.approx(180.0)
    p, _ = step_robot(w, Pose(0, 0, 10), Motion.RotateRight, 30)
    assert p.heading == pytest.approx(340.0)


def test_forward_into_wall_is_flagged_and_blocked():
    w = build_world(straight())
    start = Pose(21.2, 0, 0)  # end wall at x = 21.5, 0.3 m ahead
    p, hit = step_robot(w, start, Motion.Forward)
    assert hit and p == start


def test_twelve_30_degree_turns_compose_exactly():
    w = build_world(straight())
    p = Pose(0, 0, 37)
    for _ in range(12):
        p, _ = step_robot(w, p, Motion.RotateLeft, 30)
    assert p.heading == pytest.approx(37.0, abs=1e-9)


def test_landmark_dead_ahead():
    w = build_world(straight([{"id": "room1", "center": [23.5, 0], "door": [21.5, 0]}]))
    (v,) = visible_landmarks(w, Pose(16.5, 0, 0), 0.0)
    assert v.room_id == "room1"
    assert v.bearing == pytest.approx(0.0, abs=1e-9)
    assert v.distance == pytest.approx(5.0)


def test_landmark_outside_cone():
    x = 1.5 / math.tan(math.radians(40))
    w = build_world(straight([{"id": "room1", "center": [5 + x, 3.5], "door": [5 + x, 1.5]}]))
    pose = Pose(5, 0, 0)
    assert visible_landmarks(w, pose, 0.0) == []
    (v,) = visible_landmarks(w, pose, 0.0, fov=100)
    assert v.bearing == pytest.approx(40.0)


def test_landmark_behind_wall_is_occluded():
    w, _ = fig2()
    pose = Pose(0, 8, 270)
    # wide cone so only occlusion can remove it
    assert "room14" not in [v.room_id for v in visible_landmarks(w, pose, 0.0, fov=179)]
    assert "room14" in [v.room_id for v in visible_landmarks(w, Pose(0, 0.5, 0), 0.0)]


def test_sign_is_one_sided():
    w = build_world(straight([{"id": "room1", "center": [10, 3.5], "door": [10, 1.5]}]))
    l = w.landmark("room1")
    assert l.normal == pytest.approx((0.0, -1.0))
    assert visible_landmarks(w, Pose(5, 0, 0), 0.0)[0].room_id == "room1"


@settings(max_examples=60, deadline=None)
@given(
    x=st.floats(1, 23),
    heading=st.floats(0, 359.9),
    fov=st.floats(10, 80),
    extra=st.floats(0, 60),
    rng=st.floats(3, 14),
)
def test_visibility_monotone_in_fov_and_range(x, heading, fov, extra, rng):
    w, _ = fig2()
    pose = Pose(x, 0, heading)
    small = {v.room_id for v in visible_landmarks(w, pose, 0.0, fov=fov)}
    assert small <= {v.room_id for v in visible_landmarks(w, pose, 0.0, fov=min(fov + extra, 179))}
    near = w.with_motion(MotionConfig(max_range=rng))
    assert {v.room_id for v in visible_landmarks(near, pose, 0.0, fov=fov)} <= small


def test_forward_never_leaves_free_space():
    w, _ = fig2()
    import numpy as np

    rng = np.random.default_rng(3)
    p = Pose(0, 8, 270)
    for _ in range(400):
        if rng.random() < 0.3:
            p, _ = step_robot(w, p, Motion.RotateLeft, float(rng.uniform(-180, 180)))
        p, _ = step_robot(w, p, Motion.Forward)
        assert w.is_safe(p.xy)


def test_generate_map_examples():
    tiny = generate_map(1, 0, seed=0)
    assert len(tiny.rooms) == 1
    big = generate_map(30, 3, seed=1)
    assert len(big.rooms) == 30
    assert sum(1 for w in big.waypoints if w.kind == "branch") == 3
    load_map_spec(big.dumps())
    assert generate_map(12, 1, seed=4).dumps() == generate_map(12, 1, seed=4).dumps()


def test_generated_tasks_meet_predicates_and_are_deterministic():
    spec = generate_map(24, 3, seed=101)
    w, m = build_world(spec), segment_path(spec)
    for difficulty in ("easy", "medium", "hard"):
        tasks = generate_tasks(w, m, difficulty, 8, seed=7)
        assert [t.to_dict() for t in tasks] == [t.to_dict() for t in generate_tasks(w, m, difficulty, 8, seed=7)]
        for t in tasks:
            assert task_satisfies(w, m, t)
            if difficulty == "easy":
                assert target_visible(w, t.start_pose, t.target_room)
                assert 3 <= t.oracle_steps <= 5
            elif difficulty == "medium":
                assert 6 <= t.oracle_steps <= 10 and t.turns >= 1
            else:
                assert t.oracle_steps > 10 and t.turns >= 2 and t.branch_choices >= 1


def test_hard_task_on_branch_free_map_is_infeasible():
    w, m = fig2()
    with pytest.raises(InfeasibleTaskError) as err:
        generate_tasks(w, m, "hard", 1, seed=0)
    assert err.value.found == 0


def test_task_json_round_trip():
    spec = generate_map(16, 1, seed=5)
    w, m = build_world(spec), segment_path(spec)
    t = generate_tasks(w, m, "medium", 1, seed=1)[0]
    again = Task.from_dict(json.loads(json.dumps(t.to_dict())))
    assert again.to_dict() == t.to_dict()
