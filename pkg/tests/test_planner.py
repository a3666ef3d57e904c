from __future__ import annotations

import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import graph_of, oracle_route_length
from pmnav.fixtures import fixture_bytes
from pmnav.planner import (
    Action,
    EmptyPlanError,
    InvalidRouteError,
    NavPlan,
    NavTask,
    NoRouteError,
    PlanError,
    PlanParseError,
    PlanStep,
    UnknownLandmarkError,
    format_plan,
    initial_heading_for,
    parse_plan_response,
    plan,
    plan_actions,
    plan_waypoints,
    relate,
    render_hcot_prompt,
    route_length,
    turn_action,
    validate_plan,
)
from pmnav.priori_map import compile_map_bytes, render_semantic_text, segment_direction, segment_path, spec_from_dict
from pmnav.world_sim import generate_map


def fixture(name):
    return compile_map_bytes(fixture_bytes(name))


def straight_map():
    return segment_path(
        spec_from_dict(
            {
                "meta": {},
                "rooms": [
                    {"id": "room1", "center": [6, 3.5], "door": [6, 1.5]},
                    {"id": "room2", "center": [14, -3.5], "door": [14, -1.5]},
                ],
                "waypoints": [{"id": "start", "kind": "start", "pos": [0, 0]}, {"id": "end", "kind": "end", "pos": [20, 0]}],
                "path_edges": [["start", "end"]],
            }
        )
    )


def test_fig2_route_passes_rooms_then_turn():
    m = fixture("fig2")
    route = plan_waypoints(m, NavTask("seg3", "room17"))
    labels = [m.label(n) for n in route]
    assert labels == ["room7", "room8", "turn2", "room17"]


def test_fig2_plan_has_prediction_pair():
    m = fixture("fig2")
    p = plan(m, NavTask("seg3", "room17", "east"))
    assert format_plan(p) == "{room7: Go straight}\n{room8: Go straight} -> {turn2: Turn left}\n{room17: Stop}\n"
    assert p.steps[1].predicted == ("turn2", Action.TurnLeft)


def test_relate_matches_waypoint_plan():
    m = fixture("fig2")
    task = NavTask("seg3", "room17")
    rel = relate(m, task)
    assert rel.hop_count == len(plan_waypoints(m, task))
    # start midpoint (7.5, 0), room17 centre (20.5, 10): more east than north
    assert rel.target_bearing == "east"


def test_adjacent_target_is_single_hop():
    m = fixture("fig2")
    assert plan_waypoints(m, NavTask("seg4", "room8")) == ["room8"]
    assert relate(m, NavTask("seg4", "room8")).hop_count == 1


def test_unknown_ids_and_unreachable_target():
    m = fixture("fig2")
    with pytest.raises(PlanError):
        plan_waypoints(m, NavTask("seg99", "room17"))
    with pytest.raises(PlanError):
        plan_waypoints(m, NavTask("seg3", "room99"))
    # a compiled map is always connected, so cut the graph by hand
    adjacency = dict(m.adjacency)
    adjacency["turn2"] = tuple(s for s in adjacency["turn2"] if s != "seg6")
    cut = replace(m, adjacency=adjacency)
    with pytest.raises(NoRouteError):
        plan_waypoints(cut, NavTask("seg3", "room17"))


def test_straight_corridor_plan():
    m = straight_map()
    p = plan(m, NavTask("seg1", "room2", "east"))
    assert [(s.landmark, s.action) for s in p.steps] == [("room1", Action.GoStraight), ("room2", Action.Stop)]


def test_fork_side_from_cross_product():
    m = fixture("tfork")
    for room, seg_end in (("room2", "end1"), ("room3", "end2")):
        p = plan(m, NavTask("seg1", room, "east"))
        (wp, action) = p.steps[0].predicted
        assert wp == "branch1"
        # incoming east; outgoing toward the arm containing the room
        inc = (1.0, 0.0)
        b, e = m.node_pos("branch1"), m.node_pos(seg_end)
        out = (e[0] - b[0], e[1] - b[1])
        cross = inc[0] * out[1] - inc[1] * out[0]
        assert action is (Action.TakeLeftFork if cross > 0 else Action.TakeRightFork)


def test_turn_action_thresholds():
    assert turn_action((1, 0), (1, 0.3), False) is Action.GoStraight
    assert turn_action((1, 0), (0, 1), False) is Action.TurnLeft
    assert turn_action((1, 0), (0, -1), True) is Action.TakeRightFork
    with pytest.raises(InvalidRouteError):
        turn_action((1, 0), (-1, 0.01), False)


def test_reversal_inside_route_is_rejected():
    m = straight_map()
    with pytest.raises(InvalidRouteError):
        plan_actions(m, ["room1", "room2", "room1"], "east")


def test_optimal_against_dijkstra_oracle():
    for seed in range(10):
        m = segment_path(generate_map(30, seed % 4, seed=500 + seed))
        for seg in m.segments[::3]:
            for room in sorted(m.room_node)[::4]:
                got = route_length(m, plan_waypoints(m, NavTask(seg.id, room)))
                assert abs(got - oracle_route_length(m, seg.id, room)) <= 1e-9


def test_replayed_headings_follow_segment_directions():
    m = segment_path(generate_map(20, 2, seed=7))
    for seg in m.segments[::2]:
        for room in sorted(m.room_node)[::3]:
            task = NavTask(seg.id, room)
            route = plan_waypoints(m, task)
            p = plan(m, task)
            # each turn in the plan agrees with the compass change between segments
            headings = [initial_heading_for(m, task, route[0])]
            headings += [segment_direction(m.node_pos(a), m.node_pos(b), m.north) for a, b in zip(route, route[1:])]
            turns = [s.action for s in p.steps if s.action not in (Action.GoStraight, Action.Stop)]
            turns += [s.predicted[1] for s in p.steps if s.predicted]
            changes = sum(1 for a, b in zip(headings, headings[1:]) if a != b)
            assert len(turns) == changes
            assert p.steps[-1].action is Action.Stop
            assert p.steps[-1].landmark == room


def test_symbolic_plan_validates():
    for name, seg, room in (("fig2", "seg3", "room17"), ("loop", "seg1", "room4"), ("tfork", "seg1", "room3")):
        m = fixture(name)
        task = NavTask(seg, room)
        report = validate_plan(m, task, plan(m, task))
        assert report.succeeds, report.problems
        assert report.length_ratio == pytest.approx(1.0)


def test_plan_missing_final_turn_fails():
    m = fixture("fig2")
    task = NavTask("seg3", "room17", "east")
    bad = NavPlan((PlanStep("room7", Action.GoStraight), PlanStep("room8", Action.GoStraight), PlanStep("room17", Action.Stop)))
    assert not validate_plan(m, task, bad).reaches_target


def test_detour_plan_on_loop():
    m = fixture("loop")
    task = NavTask("seg1", "room4", "east")
    detour = parse_plan_response("{turn2: Turn left}\n{turn3: Turn left}\n{room4: Stop}\n", m)
    report = validate_plan(m, task, detour)
    assert report.succeeds
    # oracle: half the start segment plus the clockwise and counter-clockwise ways round
    g = graph_of(m)
    half = m.segment_by_id["seg1"].length / 2
    import networkx as nx

    g.remove_edge("turn1", m.room_node["room1"])
    long_way = nx.dijkstra_path_length(g, m.room_node["room1"], m.room_node["room4"], weight="weight")
    short_way = oracle_route_length(m, "seg1", "room4")
    assert report.length_ratio == pytest.approx((half + long_way) / (half + short_way))
    assert report.length_ratio > 1


def test_prompt_content_and_determinism():
    m = fixture("fig2")
    task = NavTask("seg3", "room17", "east")
    text = render_hcot_prompt(m, task)
    assert text == render_hcot_prompt(m, task)
    assert render_semantic_text(m).rstrip("\n") in text
    for needle in ("seg3", "room17", "relative relation", "key waypoints", "first-person actions", "{landmark: Action}"):
        assert needle in text
    assert text.index("(relative relation)") < text.index("(key waypoints)") < text.index("(first-person actions)")


def test_parse_prediction_pair_and_errors():
    m = fixture("fig2")
    p = parse_plan_response("Here is the plan:\n{room8: Go straight} -> {turn2: Turn left}\n{room17: stop}\n", m)
    assert p.steps[0] == PlanStep("room8", Action.GoStraight, ("turn2", Action.TurnLeft))
    assert p.source == "external-backend"
    assert parse_plan_response("{room8: Go straight} → {turn2: Turn left}").steps[0].predicted == ("turn2", Action.TurnLeft)
    with pytest.raises(EmptyPlanError):
        parse_plan_response("")
    with pytest.raises(UnknownLandmarkError):
        parse_plan_response("{room99: Go straight}", m)
    with pytest.raises(PlanParseError) as err:
        parse_plan_response("{room8: Go straight}\n  {room17: Fly}")
    assert (err.value.line, err.value.column) == (2, 12)


actions = st.sampled_from(list(Action))
landmarks = st.from_regex(r"(room[1-9][0-9]?|turn[1-9]|branch[1-9])", fullmatch=True)
steps = st.builds(PlanStep, landmarks, actions, st.none() | st.tuples(landmarks, actions))


@settings(max_examples=200, deadline=None)
@given(st.lists(steps, min_size=1, max_size=8))
def test_parse_inverts_format(step_list):
    p = NavPlan(tuple(step_list), "external-backend")
    assert parse_plan_response(format_plan(p)) == p


def test_plan_json_round_trip():
    p = plan(fixture("fig2"), NavTask("seg3", "room17"))
    assert NavPlan.from_dict(p.to_dict()) == p
