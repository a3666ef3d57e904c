"""Annotated floor plans and the segment graph compiled from them.

A floor plan (``PrioriMapSpec``) lists rooms, key waypoints and the corridor
skeleton.  ``segment_path`` turns it into a ``SemanticPrioriMap``: every room
door is projected onto the nearest corridor edge, and the corridor is cut at
those projections and at the key waypoints into named segments such as
``seg3(room14–room7)``.
"""

from __future__ import annotations

import functools
import json
import math
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable

from .geometry import EPS, Point, dist, project_onto_segment

WAYPOINT_KINDS = ("start", "turn", "branch", "end")
COMPASS = ("north", "east", "south", "west")
ROOM_ID = re.compile(r"^room\d+$")

DEFAULT_MAX_LINK = 5.0
TIE_EPS = 1e-9
MERGE_EPS = 1e-6
EN_DASH = "–"


class MapSpecError(ValueError):
    """Raised for malformed or inconsistent map specs."""


class DegenerateDirectionError(ValueError):
    pass


@dataclass(frozen=True)
class RoomSpec:
    id: str
    center: Point
    door: Point
    landmark_label: str = ""


@dataclass(frozen=True)
class KeyWaypoint:
    id: str
    kind: str
    pos: Point


@dataclass(frozen=True)
class PrioriMapSpec:
    rooms: tuple[RoomSpec, ...]
    waypoints: tuple[KeyWaypoint, ...]
    path_edges: tuple[tuple[str, str], ...]
    walls: tuple[tuple[Point, Point], ...] = ()
    name: str = "map"
    north: Point = (0.0, 1.0)
    max_link_distance: float = DEFAULT_MAX_LINK

    @functools.cached_property
    def waypoint_by_id(self) -> dict[str, KeyWaypoint]:
        return {w.id: w for w in self.waypoints}

    @functools.cached_property
    def room_by_id(self) -> dict[str, RoomSpec]:
        return {r.id: r for r in self.rooms}

    def edge_points(self, index: int) -> tuple[Point, Point]:
        a, b = self.path_edges[index]
        return self.waypoint_by_id[a].pos, self.waypoint_by_id[b].pos

    def to_dict(self) -> dict[str, Any]:
        return {
            "meta": {
                "name": self.name,
                "north": list(self.north),
                "max_link_distance": self.max_link_distance,
            },
            "rooms": [
                {"id": r.id, "center": list(r.center), "door": list(r.door), "label": r.landmark_label}
                for r in self.rooms
            ],
            "waypoints": [{"id": w.id, "kind": w.kind, "pos": list(w.pos)} for w in self.waypoints],
            "path_edges": [list(e) for e in self.path_edges],
            "walls": [[list(a), list(b)] for a, b in self.walls],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


@dataclass(frozen=True)
class RoomLink:
    room_id: str
    point: Point
    edge_index: int
    arc: float
    distance: float


@dataclass(frozen=True)
class Node:
    id: str
    kind: str  # one of WAYPOINT_KINDS or "room"
    pos: Point
    rooms: tuple[str, ...] = ()
    edge_index: int | None = None  # host edge, room waypoints only


@dataclass(frozen=True)
class Segment:
    id: str
    endpoints: tuple[str, str]
    flanking_rooms: tuple[str, ...]
    direction: str
    length: float
    edge_index: int

    @property
    def number(self) -> int:
        return int(self.id[3:])

    def other(self, node_id: str) -> str:
        a, b = self.endpoints
        return b if node_id == a else a


@dataclass(frozen=True)
class SemanticPrioriMap:
    nodes: dict[str, Node]
    segments: tuple[Segment, ...]
    adjacency: dict[str, tuple[str, ...]]
    spec: PrioriMapSpec
    room_node: dict[str, str] = field(default_factory=dict)

    @functools.cached_property
    def segment_by_id(self) -> dict[str, Segment]:
        return {s.id: s for s in self.segments}

    @property
    def north(self) -> Point:
        return self.spec.north

    def node_pos(self, node_id: str) -> Point:
        return self.nodes[node_id].pos

    def neighbors(self, node_id: str) -> Iterable[tuple[str, Segment]]:
        for sid in self.adjacency.get(node_id, ()):
            seg = self.segment_by_id[sid]
            yield seg.other(node_id), seg

    def segment_between(self, a: str, b: str) -> Segment | None:
        for other, seg in self.neighbors(a):
            if other == b:
                return seg
        return None

    def label(self, node_id: str) -> str:
        """Landmark name of a node: its room if it has one, else its id."""
        node = self.nodes[node_id]
        if node.kind == "room":
            return node.rooms[0]
        return node_id

    def resolve(self, landmark: str) -> str | None:
        """Node id referenced by a landmark (room id or key waypoint id)."""
        if landmark in self.room_node:
            return self.room_node[landmark]
        if landmark in self.nodes:
            return landmark
        return None


# ---------------------------------------------------------------------------
# loading


def _point(value: Any, where: str) -> Point:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise MapSpecError(f"{where}: expected [x, y]")
    try:
        x, y = float(value[0]), float(value[1])
    except (TypeError, ValueError) as exc:
        raise MapSpecError(f"{where}: non-numeric coordinate") from exc
    if not (math.isfinite(x) and math.isfinite(y)):
        raise MapSpecError(f"{where}: coordinate not finite")
    return (x, y)


def spec_from_dict(data: dict[str, Any]) -> PrioriMapSpec:
    if not isinstance(data, dict):
        raise MapSpecError("top level must be an object")
    for key in ("meta", "rooms", "waypoints", "path_edges"):
        if key not in data:
            raise MapSpecError(f"missing top-level key '{key}'")
    meta = data["meta"] or {}
    north = _point(meta.get("north", [0.0, 1.0]), "meta.north")
    norm = math.hypot(*north)
    if norm < EPS:
        raise MapSpecError("meta.north must be nonzero")
    north = (north[0] / norm, north[1] / norm)

    rooms = []
    for i, r in enumerate(data["rooms"]):
        rid = r.get("id")
        if not isinstance(rid, str) or not ROOM_ID.match(rid):
            raise MapSpecError(f"rooms[{i}]: id must look like room<N>, got {rid!r}")
        rooms.append(
            RoomSpec(
                id=rid,
                center=_point(r.get("center"), f"rooms[{i}].center"),
                door=_point(r.get("door"), f"rooms[{i}].door"),
                landmark_label=str(r.get("label", rid)),
            )
        )
    waypoints = []
    for i, w in enumerate(data["waypoints"]):
        kind = w.get("kind")
        if kind not in WAYPOINT_KINDS:
            raise MapSpecError(f"waypoints[{i}]: kind must be one of {WAYPOINT_KINDS}, got {kind!r}")
        wid = w.get("id")
        if not isinstance(wid, str) or not wid:
            raise MapSpecError(f"waypoints[{i}]: missing id")
        waypoints.append(KeyWaypoint(id=wid, kind=kind, pos=_point(w.get("pos"), f"waypoints[{i}].pos")))
    edges = []
    for i, e in enumerate(data["path_edges"]):
        if not (isinstance(e, (list, tuple)) and len(e) == 2 and all(isinstance(x, str) for x in e)):
            raise MapSpecError(f"path_edges[{i}]: expected [id, id]")
        edges.append((e[0], e[1]))
    walls = tuple(
        (_point(w[0], f"walls[{i}][0]"), _point(w[1], f"walls[{i}][1]")) for i, w in enumerate(data.get("walls", []))
    )
    spec = PrioriMapSpec(
        rooms=tuple(rooms),
        waypoints=tuple(waypoints),
        path_edges=tuple(edges),
        walls=walls,
        name=str(meta.get("name", "map")),
        north=north,
        max_link_distance=float(meta.get("max_link_distance", DEFAULT_MAX_LINK)),
    )
    validate_spec(spec)
    return spec


def validate_spec(spec: PrioriMapSpec) -> None:
    wp_ids = [w.id for w in spec.waypoints]
    if len(set(wp_ids)) != len(wp_ids):
        raise MapSpecError("duplicate waypoint id")
    room_ids = [r.id for r in spec.rooms]
    if len(set(room_ids)) != len(room_ids):
        raise MapSpecError("duplicate room id")
    if set(wp_ids) & set(room_ids):
        raise MapSpecError("waypoint ids must not collide with room ids")
    if not spec.path_edges:
        raise MapSpecError("map needs at least one path edge")
    known = set(wp_ids)
    for i, (a, b) in enumerate(spec.path_edges):
        for x in (a, b):
            if x not in known:
                raise MapSpecError(f"path_edges[{i}]: dangling waypoint reference '{x}'")
        if a == b or dist(spec.waypoint_by_id[a].pos, spec.waypoint_by_id[b].pos) < EPS:
            raise MapSpecError(f"path_edges[{i}]: zero-length edge")
    # connectivity over every declared waypoint
    adj: dict[str, set[str]] = {w: set() for w in wp_ids}
    for a, b in spec.path_edges:
        adj[a].add(b)
        adj[b].add(a)
    seen = {wp_ids[0]}
    queue = deque([wp_ids[0]])
    while queue:
        for nxt in adj[queue.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    if len(seen) != len(wp_ids):
        missing = sorted(set(wp_ids) - seen)
        raise MapSpecError(f"path skeleton is disconnected (unreached: {', '.join(missing)})")
    link_room_waypoints(spec)


def load_map_spec(source: bytes | str) -> PrioriMapSpec:
    """Parse and validate a JSON map spec."""
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MapSpecError(f"map spec is not UTF-8 (byte {exc.start})") from exc
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise MapSpecError(f"syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return spec_from_dict(data)


# ---------------------------------------------------------------------------
# compilation


def link_room_waypoints(spec: PrioriMapSpec) -> list[RoomLink]:
    """Project every room door onto its nearest path edge.

    Ties within ``TIE_EPS`` go to the edge listed first, then to the smaller
    arc length.  Output is ordered by edge index, then arc length.
    """
    links = []
    for room in spec.rooms:
        best: tuple[float, int, float, Point] | None = None
        for i in range(len(spec.path_edges)):
            a, b = spec.edge_points(i)
            q, arc, d = project_onto_segment(room.door, a, b)
            if best is None or d < best[0] - TIE_EPS:
                best = (d, i, arc, q)
        assert best is not None
        d, i, arc, q = best
        if d > spec.max_link_distance:
            raise MapSpecError(
                f"{room.id}: door is {d:.3f} m from the nearest path edge (max {spec.max_link_distance} m)"
            )
        links.append(RoomLink(room.id, q, i, arc, d))
    links.sort(key=lambda l: (l.edge_index, l.arc, l.room_id))
    return links


def segment_direction(a: Point, b: Point, north: Point = (0.0, 1.0)) -> str:
    """Compass label of the bearing from ``a`` to ``b``.

    Quantized to the four cardinal directions; an exact 45° tie goes to the
    clockwise neighbour.
    """
    vx, vy = b[0] - a[0], b[1] - a[1]
    if math.hypot(vx, vy) < EPS:
        raise DegenerateDirectionError(f"no direction between identical points {a}")
    nx, ny = north
    ex, ey = ny, -nx  # east is north rotated clockwise
    bearing = math.degrees(math.atan2(vx * ex + vy * ey, vx * nx + vy * ny)) % 360.0
    return COMPASS[int(math.floor((bearing + 45.0 + 1e-9) / 90.0)) % 4]


def segment_path(spec: PrioriMapSpec) -> SemanticPrioriMap:
    """Cut the corridor skeleton into segments at key and room waypoints."""
    nodes: dict[str, Node] = {w.id: Node(w.id, w.kind, w.pos) for w in spec.waypoints}
    room_node: dict[str, str] = {}
    per_edge: dict[int, list[tuple[float, str]]] = {}

    for link in link_room_waypoints(spec):
        a_id, b_id = spec.path_edges[link.edge_index]
        length = dist(*spec.edge_points(link.edge_index))
        if link.arc <= MERGE_EPS or link.arc >= length - MERGE_EPS:
            key = a_id if link.arc <= MERGE_EPS else b_id
            n = nodes[key]
            nodes[key] = Node(n.id, n.kind, n.pos, n.rooms + (link.room_id,))
            room_node[link.room_id] = key
            continue
        stops = per_edge.setdefault(link.edge_index, [])
        if stops and abs(stops[-1][0] - link.arc) <= MERGE_EPS:
            raise MapSpecError(f"{link.room_id} and {stops[-1][1]} project onto the same corridor point")
        stops.append((link.arc, link.room_id))
        nodes[link.room_id] = Node(link.room_id, "room", link.point, (link.room_id,), link.edge_index)
        room_node[link.room_id] = link.room_id

    segments: list[Segment] = []
    adjacency: dict[str, list[str]] = {nid: [] for nid in nodes}
    for i, (a_id, b_id) in enumerate(spec.path_edges):
        chain = [a_id] + [rid for _, rid in per_edge.get(i, [])] + [b_id]
        for u, v in zip(chain, chain[1:]):
            pu, pv = nodes[u].pos, nodes[v].pos
            sid = f"seg{len(segments) + 1}"
            segments.append(
                Segment(
                    id=sid,
                    endpoints=(u, v),
                    flanking_rooms=nodes[u].rooms + nodes[v].rooms,
                    direction=segment_direction(pu, pv, spec.north),
                    length=dist(pu, pv),
                    edge_index=i,
                )
            )
            adjacency[u].append(sid)
            adjacency[v].append(sid)

    return SemanticPrioriMap(
        nodes=nodes,
        segments=tuple(segments),
        adjacency={k: tuple(v) for k, v in adjacency.items()},
        spec=spec,
        room_node=room_node,
    )


@functools.lru_cache(maxsize=64)
def compile_map_bytes(source: bytes) -> SemanticPrioriMap:
    """Parse and compile once per distinct spec document."""
    return segment_path(load_map_spec(source))


# ---------------------------------------------------------------------------
# rendering


def segment_name(seg: Segment, m: SemanticPrioriMap) -> str:
    a, b = seg.endpoints
    ra = m.nodes[a].rooms[0] if m.nodes[a].rooms else ""
    rb = m.nodes[b].rooms[0] if m.nodes[b].rooms else ""
    return f"{seg.id}({ra}{EN_DASH}{rb})"


def render_semantic_text(m: SemanticPrioriMap) -> str:
    lines = ["# segments"]
    lines += [segment_name(s, m) for s in m.segments]
    lines.append("# adjacency")
    for nid in sorted(m.adjacency, key=_node_sort_key):
        segs = m.adjacency[nid]
        if segs:
            lines.append(f"{m.label(nid)}: {', '.join(segs)}")
    lines.append("# directions")
    for s in m.segments:
        a, b = s.endpoints
        lines.append(f"{s.id}: from {m.label(a)} to {m.label(b)}, the direction is {s.direction}")
    return "\n".join(lines) + "\n"


def _node_sort_key(node_id: str) -> tuple[str, int, str]:
    match = re.match(r"^(.*?)(\d+)$", node_id)
    if match:
        return (match.group(1), int(match.group(2)), node_id)
    return (node_id, -1, node_id)


def render_annotated_map(m: SemanticPrioriMap, margin: float = 3.0, scale: float = 10.0) -> str:
    """SVG drawing of the map with text tags for rooms, segments and key waypoints."""
    spec = m.spec
    xs: list[float] = []
    ys: list[float] = []
    for n in m.nodes.values():
        xs.append(n.pos[0])
        ys.append(n.pos[1])
    for r in spec.rooms:
        xs += [r.center[0], r.door[0]]
        ys += [r.center[1], r.door[1]]
    for a, b in spec.walls:
        xs += [a[0], b[0]]
        ys += [a[1], b[1]]
    x0, x1 = min(xs) - margin, max(xs) + margin
    y0, y1 = min(ys) - margin, max(ys) + margin
    width, height = (x1 - x0) * scale, (y1 - y0) * scale

    def px(p: Point) -> str:
        return f"{(p[0] - x0) * scale:.2f},{(y1 - p[1]) * scale:.2f}"

    def xy(p: Point) -> tuple[str, str]:
        return f"{(p[0] - x0) * scale:.2f}", f"{(y1 - p[1]) * scale:.2f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.2f} {height:.2f}">',
        f'<title>{_esc(spec.name)}</title>',
        '<rect width="100%" height="100%" fill="white"/>',
        '<g id="walls" stroke="black" stroke-width="2">',
    ]
    for a, b in spec.walls:
        (ax, ay), (bx, by) = xy(a), xy(b)
        out.append(f'<line x1="{ax}" y1="{ay}" x2="{bx}" y2="{by}"/>')
    out.append("</g>")
    out.append('<g id="rooms" fill="#eef3fb" stroke="#5577aa" stroke-width="1">')
    for r in spec.rooms:
        half = max(abs(r.center[0] - r.door[0]), abs(r.center[1] - r.door[1]), 1.0)
        cx, cy = xy(r.center)
        out.append(
            f'<rect x="{float(cx) - half * scale:.2f}" y="{float(cy) - half * scale:.2f}" '
            f'width="{2 * half * scale:.2f}" height="{2 * half * scale:.2f}"/>'
        )
    out.append("</g>")
    out.append('<g id="path" stroke="#d08020" stroke-width="3" fill="none">')
    for s in m.segments:
        a, b = s.endpoints
        out.append(f'<polyline id="{s.id}" points="{px(m.node_pos(a))} {px(m.node_pos(b))}"/>')
    out.append("</g>")
    out.append('<g id="tags" font-family="sans-serif" font-size="11">')
    for r in spec.rooms:
        cx, cy = xy(r.center)
        out.append(f'<text x="{cx}" y="{cy}" text-anchor="middle" fill="#224488">{r.id}</text>')
    for s in m.segments:
        a, b = m.node_pos(s.endpoints[0]), m.node_pos(s.endpoints[1])
        mx, my = xy(((a[0] + b[0]) / 2, (a[1] + b[1]) / 2))
        out.append(f'<text x="{mx}" y="{float(my) - 4:.2f}" text-anchor="middle" fill="#a05000">{s.id}</text>')
    for w in spec.waypoints:
        wx, wy = xy(w.pos)
        out.append(f'<circle cx="{wx}" cy="{wy}" r="4" fill="#c03030"/>')
        out.append(f'<text x="{float(wx) + 6:.2f}" y="{float(wy) + 12:.2f}" fill="#c03030">{_esc(w.id)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")
