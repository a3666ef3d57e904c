from __future__ import annotations

import json

import pytest

from _oracles import map_invariant_problems
from pmnav.fixtures import fixture_bytes, fixture_names
from pmnav.priori_map import (
    DegenerateDirectionError,
    MapSpecError,
    compile_map_bytes,
    link_room_waypoints,
    load_map_spec,
    render_annotated_map,
    render_semantic_text,
    segment_direction,
    segment_name,
    segment_path,
)
from pmnav.world_sim import generate_map

# Worked by hand from the fixture: doors at x=5, 10, 18 on the south corridor,
# and y=10 on the east leg, so the east-running edge splits into four segments.
FIG2_TEXT = """\
# segments
seg1(–)
seg2(–room14)
seg3(room14–room7)
seg4(room7–room8)
seg5(room8–)
seg6(–room17)
seg7(room17–)
# adjacency
end: seg7
room7: seg3, seg4
room8: seg4, seg5
room14: seg2, seg3
room17: seg6, seg7
start: seg1
turn1: seg1, seg2
turn2: seg5, seg6
# directions
seg1: from start to turn1, the direction is south
seg2: from turn1 to room14, the direction is east
seg3: from room14 to room7, the direction is east
seg4: from room7 to room8, the direction is east
seg5: from room8 to turn2, the direction is east
seg6: from turn2 to room17, the direction is north
seg7: from room17 to end, the direction is north
"""


def _spec(**over):
    base = {
        "meta": {"name": "t"},
        "rooms": [{"id": "room1", "center": [5, 3.5], "door": [5, 1.5]}],
        "waypoints": [{"id": "start", "kind": "start", "pos": [0, 0]}, {"id": "end", "kind": "end", "pos": [10, 0]}],
        "path_edges": [["start", "end"]],
    }
    base.update(over)
    return base


def test_fig2_semantic_text_is_byte_exact():
    m = compile_map_bytes(fixture_bytes("fig2"))
    assert render_semantic_text(m).encode("utf-8") == FIG2_TEXT.encode("utf-8")


def test_fig2_segment_name_uses_en_dash():
    m = segment_path(load_map_spec(fixture_bytes("fig2")))
    assert segment_name(m.segment_by_id["seg3"], m) == "seg3(room14–room7)"


@pytest.mark.parametrize("name", fixture_names())
def test_fixture_invariants(name):
    spec = load_map_spec(fixture_bytes(name))
    m = segment_path(spec)
    assert map_invariant_problems(spec, m) == []
    assert render_semantic_text(segment_path(spec)) == render_semantic_text(m)


def test_generated_spec_invariants():
    for seed in range(20):
        spec = generate_map(8 + seed % 12, seed % 4, seed=seed)
        assert map_invariant_problems(spec, segment_path(spec)) == [], seed


def test_spec_round_trips_through_json():
    spec = load_map_spec(fixture_bytes("yfork"))
    again = load_map_spec(spec.dumps())
    assert render_semantic_text(segment_path(again)) == render_semantic_text(segment_path(spec))


def test_syntax_error_reports_position():
    with pytest.raises(MapSpecError, match="line 2 column"):
        load_map_spec('{\n  "meta": ,\n}')


@pytest.mark.parametrize(
    "patch, message",
    [
        ({"waypoints": [{"id": "start", "kind": "start", "pos": [0, 0]}, {"id": "start", "kind": "end", "pos": [9, 0]}]}, "duplicate"),
        ({"path_edges": [["start", "nowhere"]]}, "dangling"),
        ({"path_edges": [["start", "start"]]}, "zero-length"),
        ({"rooms": [{"id": "room1", "center": [5, 30], "door": [5, 20]}]}, "from the nearest path edge"),
        ({"rooms": [{"id": "lab", "center": [5, 3], "door": [5, 1.5]}]}, "room<N>"),
        ({"waypoints": [{"id": "start", "kind": "hub", "pos": [0, 0]}]}, "kind"),
    ],
)
def test_invalid_specs_are_rejected(patch, message):
    with pytest.raises(MapSpecError, match=message):
        load_map_spec(json.dumps(_spec(**patch)))


def test_disconnected_skeleton_is_rejected():
    data = _spec(
        waypoints=[
            {"id": "start", "kind": "start", "pos": [0, 0]},
            {"id": "end", "kind": "end", "pos": [10, 0]},
            {"id": "end2", "kind": "end", "pos": [40, 40]},
        ]
    )
    with pytest.raises(MapSpecError, match="disconnected"):
        load_map_spec(json.dumps(data))


def test_equidistant_door_links_to_lower_edge_index():
    data = _spec(
        waypoints=[
            {"id": "start", "kind": "start", "pos": [0, 0]},
            {"id": "turn1", "kind": "turn", "pos": [10, 0]},
            {"id": "end", "kind": "end", "pos": [10, 10]},
        ],
        path_edges=[["start", "turn1"], ["turn1", "end"]],
        rooms=[{"id": "room1", "center": [7, 5], "door": [8, 2]}],
    )
    (link,) = link_room_waypoints(load_map_spec(json.dumps(data)))
    assert link.edge_index == 0
    assert link.point == pytest.approx((8.0, 0.0))


def test_door_on_key_waypoint_merges_into_it():
    data = _spec(rooms=[{"id": "room1", "center": [10, 3.5], "door": [10, 1.5]}])
    m = segment_path(load_map_spec(json.dumps(data)))
    assert m.room_node["room1"] == "end"
    assert len(m.segments) == 1
    assert m.segments[0].flanking_rooms == ("room1",)


def test_compass_directions_and_tie():
    north = (0.0, 1.0)
    assert segment_direction((0, 0), (0, 5), north) == "north"
    assert segment_direction((0, 0), (5, 0), north) == "east"
    assert segment_direction((0, 0), (-5, 0), north) == "west"
    assert segment_direction((0, 0), (1, 1), north) == "east"  # 45 degrees resolves clockwise
    assert segment_direction((0, 0), (5, 0), (1.0, 0.0)) == "north"
    with pytest.raises(DegenerateDirectionError):
        segment_direction((1, 1), (1, 1), north)


def test_annotated_map_is_deterministic_and_tagged():
    m = segment_path(load_map_spec(fixture_bytes("fig2")))
    svg = render_annotated_map(m)
    assert svg == render_annotated_map(m)
    assert svg.startswith("<svg")
    for tag in ("room14", "seg3", "turn2", 'id="walls"'):
        assert tag in svg
