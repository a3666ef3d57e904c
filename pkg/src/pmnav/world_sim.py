"""A 2D functional-building world: corridors, walls, room signs and a robot.

Corridors are the path edges grown to a fixed width; rooms are rectangles
behind the corridor walls with a one-sided sign at the door.  The robot moves
in whole forward steps and explicit rotations.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np
from shapely import prepared
from shapely.geometry import LineString, Point as ShapelyPoint, Polygon, box
from shapely.ops import unary_union

from .geometry import Point, dist, heading_of, normalize_deg, project_onto_segment, ray_distances, wrap_deg
from .planner import NavTask, NoRouteError, PlanError, plan_waypoints, route_length
from .priori_map import (
    KeyWaypoint,
    PrioriMapSpec,
    RoomSpec,
    SemanticPrioriMap,
    segment_direction,
    segment_path,
    validate_spec,
)

DIFFICULTIES = ("easy", "medium", "hard")
NAVIGATION_VIEWS = (0.0, 30.0, -30.0, 60.0, -60.0, 90.0, -90.0)


class GeometryError(ValueError):
    pass


class InfeasibleTaskError(ValueError):
    def __init__(self, difficulty: str, found: int, wanted: int):
        self.difficulty = difficulty
        self.found = found
        self.wanted = wanted
        super().__init__(f"only {found} {difficulty} task(s) exist on this map, {wanted} requested")


class Motion(enum.Enum):
    Forward = "forward"
    RotateLeft = "rotate_left"
    RotateRight = "rotate_right"


@dataclass(frozen=True)
class MotionConfig:
    forward_step: float = 1.0
    turn_increment: float = 5.0
    fov: float = 60.0
    max_range: float = 15.0
    robot_radius: float = 0.3

    def __post_init__(self) -> None:
        for name in ("forward_step", "turn_increment", "fov", "max_range", "robot_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0  # degrees, counterclockwise, 0 = map east

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", normalize_deg(self.heading))

    @property
    def xy(self) -> Point:
        return (self.x, self.y)

    def to_list(self) -> list[float]:
        return [round(self.x, 6), round(self.y, 6), round(self.heading, 6)]


@dataclass(frozen=True)
class Landmark:
    room_id: str
    pos: Point
    normal: Point  # unit vector pointing out of the sign, into the corridor


@dataclass(frozen=True)
class Corridor:
    a: Point
    b: Point
    width: float
    edge_index: int

    @property
    def length(self) -> float:
        return dist(self.a, self.b)


@dataclass(frozen=True)
class Visible:
    room_id: str
    bearing: float  # degrees within the view, positive = left
    distance: float


@dataclass(eq=False)
class World:
    spec: PrioriMapSpec
    corridors: tuple[Corridor, ...]
    landmarks: tuple[Landmark, ...]
    walls: np.ndarray
    free_space: Polygon
    room_rects: dict[str, Polygon]
    motion: MotionConfig = field(default_factory=MotionConfig)
    corridor_width: float = 3.0

    def __post_init__(self) -> None:
        self._free = prepared.prep(self.free_space)
        self._safe = prepared.prep(self.free_space.buffer(-self.motion.robot_radius, join_style="mitre"))
        self._corridor_polys = [
            LineString([c.a, c.b]).buffer(c.width / 2, cap_style="square", join_style="mitre") for c in self.corridors
        ]
        self._lm_pos = np.array([l.pos for l in self.landmarks], dtype=float).reshape(-1, 2)
        self._lm_normal = np.array([l.normal for l in self.landmarks], dtype=float).reshape(-1, 2)
        self._lm_ids = [l.room_id for l in self.landmarks]

    def is_free(self, p: Point) -> bool:
        return self._free.contains(ShapelyPoint(p))

    def is_safe(self, p: Point) -> bool:
        """Free with robot-radius clearance."""
        return self._safe.contains(ShapelyPoint(p))

    def path_is_safe(self, a: Point, b: Point) -> bool:
        return self._safe.covers(LineString([a, b]))

    def landmark(self, room_id: str) -> Landmark:
        for l in self.landmarks:
            if l.room_id == room_id:
                return l
        raise KeyError(room_id)

    def corridors_at(self, p: Point) -> list[int]:
        pt = ShapelyPoint(p)
        return [i for i, poly in enumerate(self._corridor_polys) if poly.covers(pt)]

    def wall_distances(self, origin: Point, angles: Sequence[float]) -> np.ndarray:
        return ray_distances(origin, angles, self.walls, self.motion.max_range * 4)

    def with_motion(self, motion: MotionConfig) -> "World":
        return replace(self, motion=motion)


# ---------------------------------------------------------------------------
# construction


def corridor_geometry(spec: PrioriMapSpec, width: float) -> Polygon:
    parts = []
    for i in range(len(spec.path_edges)):
        a, b = spec.edge_points(i)
        parts.append(LineString([a, b]).buffer(width / 2, cap_style="square", join_style="mitre"))
    union = unary_union(parts)
    if union.geom_type != "Polygon":
        raise GeometryError("corridors do not form one connected region")
    return union


def polygon_walls(poly: Polygon) -> list[tuple[Point, Point]]:
    out = []
    rings = [poly.exterior, *poly.interiors]
    for ring in rings:
        coords = list(ring.coords)
        for p, q in zip(coords, coords[1:]):
            if dist(p, q) > 1e-9:
                out.append(((round(p[0], 9), round(p[1], 9)), (round(q[0], 9), round(q[1], 9))))
    return out


def room_rect(room: RoomSpec) -> Polygon:
    half = max(abs(room.center[0] - room.door[0]), abs(room.center[1] - room.door[1]), 1.0)
    cx, cy = room.center
    return box(cx - half, cy - half, cx + half, cy + half)


def build_world(spec: PrioriMapSpec, corridor_width: float = 3.0, motion: MotionConfig | None = None) -> World:
    motion = motion or MotionConfig()
    if corridor_width <= 2 * motion.robot_radius:
        raise GeometryError("corridor narrower than the robot")
    free = corridor_geometry(spec, corridor_width)
    rects = {r.id: room_rect(r) for r in spec.rooms}
    ids = sorted(rects)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            if rects[a].intersection(rects[b]).area > 1e-9:
                raise GeometryError(f"{a} overlaps {b}")
    walls = polygon_walls(free)
    for rid in ids:
        walls += polygon_walls(rects[rid])
    landmarks = []
    for r in spec.rooms:
        nx, ny = r.door[0] - r.center[0], r.door[1] - r.center[1]
        n = math.hypot(nx, ny)
        if n < 1e-9:
            raise GeometryError(f"{r.id}: door coincides with room centre")
        normal = (nx / n, ny / n)
        # the sign must hang on a corridor wall and face into the corridor
        probe = ShapelyPoint(r.door[0] + 0.05 * normal[0], r.door[1] + 0.05 * normal[1])
        if free.boundary.distance(ShapelyPoint(r.door)) > 1e-6 or not free.contains(probe):
            raise GeometryError(f"{r.id}: door {r.door} is not on a corridor wall facing the corridor")
        landmarks.append(Landmark(r.id, r.door, normal))
    corridors = tuple(Corridor(*spec.edge_points(i), corridor_width, i) for i in range(len(spec.path_edges)))
    return World(
        spec=spec,
        corridors=corridors,
        landmarks=tuple(landmarks),
        walls=np.array([[a[0], a[1], b[0], b[1]] for a, b in walls], dtype=float).reshape(-1, 4),
        free_space=free,
        room_rects=rects,
        motion=motion,
        corridor_width=corridor_width,
    )


# ---------------------------------------------------------------------------
# motion and sensing


def step_robot(world: World, pose: Pose, action: Motion, magnitude: float | None = None) -> tuple[Pose, bool]:
    """Apply one motion primitive; returns the new pose and a collision flag."""
    cfg = world.motion
    if action is Motion.Forward:
        step = cfg.forward_step if magnitude is None else magnitude
        r = math.radians(pose.heading)
        target = (pose.x + step * math.cos(r), pose.y + step * math.sin(r))
        if not world.path_is_safe(pose.xy, target):
            return pose, True
        return Pose(target[0], target[1], pose.heading), False
    angle = cfg.turn_increment if magnitude is None else magnitude
    if action is Motion.RotateRight:
        angle = -angle
    return Pose(pose.x, pose.y, pose.heading + angle), False


def _landmark_geometry(world: World, pose: Pose) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per landmark: absolute bearing (deg), distance, seen-from-front-and-unoccluded mask."""
    if len(world.landmarks) == 0:
        empty = np.zeros(0)
        return empty, empty, empty.astype(bool)
    rel = world._lm_pos - np.array(pose.xy)
    d = np.hypot(rel[:, 0], rel[:, 1])
    angles = np.degrees(np.arctan2(rel[:, 1], rel[:, 0]))
    facing = np.einsum("ij,ij->i", world._lm_normal, rel) < 0
    ok = facing & (d <= world.motion.max_range) & (d > 1e-9)
    if ok.any():
        hits = ray_distances(pose.xy, angles[ok], world.walls, np.inf)
        clear = hits >= d[ok] - 1e-3
        ok[np.flatnonzero(ok)] = clear
    return angles, d, ok


def visible_landmarks(world: World, pose: Pose, view_angle: float, fov: float | None = None) -> list[Visible]:
    """Signs inside the view cone, in range, facing the robot and unoccluded."""
    return _visible_from(world, pose, view_angle, _landmark_geometry(world, pose), fov)


def _visible_from(world, pose, view_angle, geom, fov=None) -> list[Visible]:
    angles, d, ok = geom
    half = (world.motion.fov if fov is None else fov) / 2
    out = []
    center = pose.heading + view_angle
    for i in np.flatnonzero(ok):
        bearing = wrap_deg(angles[i] - center)
        if abs(bearing) <= half + 1e-9:
            out.append(Visible(world._lm_ids[i], bearing, float(d[i])))
    out.sort(key=lambda v: (v.distance, v.room_id))
    return out


def visible_in_views(world: World, pose: Pose, view_angles: Iterable[float]) -> dict[float, list[Visible]]:
    geom = _landmark_geometry(world, pose)
    return {a: _visible_from(world, pose, a, geom) for a in view_angles}


# ---------------------------------------------------------------------------
# map generation


_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))


def _edge_clear(edges: list[tuple[Point, Point]], new: tuple[Point, Point], skip: set[int], gap: float) -> bool:
    line = LineString(new)
    for i, (a, b) in enumerate(edges):
        if i in skip:
            continue
        if line.distance(LineString([a, b])) < gap:
            return False
    return True


def generate_map(
    room_count: int,
    branch_count: int = 0,
    seed: int = 0,
    corridor_width: float = 3.0,
) -> PrioriMapSpec:
    """Random rectilinear corridor tree with rooms along its edges."""
    if room_count < 1:
        raise ValueError("room_count must be at least 1")
    rng = np.random.default_rng(seed)
    for attempt in range(400):
        spec = _try_generate(rng, room_count, branch_count, corridor_width, extra_legs=attempt // 40, seed=seed)
        if spec is not None:
            return spec
    raise GeometryError(f"could not place {room_count} rooms and {branch_count} branches")


def _try_generate(rng, room_count, branch_count, width, extra_legs, seed) -> PrioriMapSpec | None:
    gap = 3 * width + 1.0  # room depth on both sides plus clearance
    n_legs = max(1, math.ceil(room_count / 9)) + extra_legs
    if branch_count and n_legs < 2:
        n_legs = 2
    d = int(rng.integers(4))
    pts: list[Point] = [(0.0, 0.0)]
    edges: list[tuple[Point, Point]] = []
    for leg in range(n_legs):
        length = float(rng.integers(16, 27)) if n_legs > 1 or room_count > 3 else float(rng.integers(10, 17))
        dx, dy = _DIRS[d]
        p = pts[-1]
        q = (p[0] + dx * length, p[1] + dy * length)
        if not _edge_clear(edges, (p, q), {len(edges) - 1}, gap):
            return None
        pts.append(q)
        edges.append((p, q))
        d = (d + (1 if rng.random() < 0.5 else 3)) % 4

    names = ["start"] + [f"turn{i}" for i in range(1, len(pts) - 1)] + ["end"]
    kinds = ["start"] + ["turn"] * (len(pts) - 2) + ["end"]
    waypoints = [KeyWaypoint(n, k, p) for n, k, p in zip(names, kinds, pts)]
    edge_ids: list[tuple[str, str]] = [(names[i], names[i + 1]) for i in range(len(edges))]
    arm_edges: list[tuple[str, str]] = []
    pos = {w.id: w.pos for w in waypoints}

    for b in range(1, branch_count + 1):
        placed = False
        for _ in range(30):
            i = int(rng.integers(len(edge_ids)))
            a_id, b_id = edge_ids[i]
            a, c = pos[a_id], pos[b_id]
            length = dist(a, c)
            if length < 18:
                continue
            arc = float(rng.integers(9, int(length) - 8))
            ux, uy = (c[0] - a[0]) / length, (c[1] - a[1]) / length
            bp = (a[0] + ux * arc, a[1] + uy * arc)
            side = 1 if rng.random() < 0.5 else -1
            arm_len = float(rng.integers(10, 17))
            ep = (bp[0] - side * uy * arm_len, bp[1] + side * ux * arm_len)
            all_edges = [(pos[x], pos[y]) for x, y in edge_ids + arm_edges]
            host = edge_ids.index((a_id, b_id))
            if not _edge_clear(all_edges, (bp, ep), {host}, gap):
                continue
            bid, eid = f"branch{b}", f"end{b}"
            pos[bid], pos[eid] = bp, ep
            waypoints.append(KeyWaypoint(bid, "branch", bp))
            waypoints.append(KeyWaypoint(eid, "end", ep))
            edge_ids[host : host + 1] = [(a_id, bid), (bid, b_id)]
            arm_edges.append((bid, eid))
            placed = True
            break
        if not placed:
            return None

    path_edges = edge_ids + arm_edges
    skeleton = PrioriMapSpec((), tuple(waypoints), tuple(path_edges), (), f"gen-{seed}")
    free = corridor_geometry(skeleton, width)
    half_w = width / 2
    slots = []
    rects: list[Polygon] = []
    for x_id, y_id in path_edges:
        a, c = pos[x_id], pos[y_id]
        length = dist(a, c)
        ux, uy = (c[0] - a[0]) / length, (c[1] - a[1]) / length
        side = 1 if rng.random() < 0.5 else -1
        arc = 3.5
        while arc <= length - 3.5 + 1e-9:
            nx, ny = -uy * side, ux * side
            base = (a[0] + ux * arc, a[1] + uy * arc)
            door = (base[0] + nx * half_w, base[1] + ny * half_w)
            center = (door[0] + nx * 1.5, door[1] + ny * 1.5)
            rect = box(center[0] - 1.5, center[1] - 1.5, center[0] + 1.5, center[1] + 1.5)
            if rect.intersection(free).area < 1e-6 and all(rect.intersection(r).area < 1e-6 for r in rects):
                slots.append((door, center))
                rects.append(rect)
            side = -side
            arc += 2.0
    if len(slots) < room_count:
        return None
    chosen = sorted(rng.choice(len(slots), size=room_count, replace=False).tolist())
    rooms = tuple(
        RoomSpec(f"room{k}", _r(slots[j][1]), _r(slots[j][0]), f"Room {k}") for k, j in enumerate(chosen, start=1)
    )
    walls = tuple(polygon_walls(free))
    spec = PrioriMapSpec(rooms, tuple(waypoints), tuple(path_edges), walls, f"gen-{seed}")
    try:
        validate_spec(spec)
        segment_path(spec)
    except ValueError:
        return None
    return spec


def _r(p: Point) -> Point:
    return (round(p[0], 9) + 0.0, round(p[1], 9) + 0.0)


# ---------------------------------------------------------------------------
# tasks


@dataclass(frozen=True)
class Task:
    start_pose: Pose
    target_room: str
    difficulty: str
    oracle_steps: int
    start_segment: str = ""
    initial_heading: str | None = None
    route: tuple[str, ...] = ()
    shortest_length: float = 0.0
    turns: int = 0
    branch_choices: int = 0

    @property
    def nav_task(self) -> NavTask:
        return NavTask(self.start_segment, self.target_room, self.initial_heading)

    def to_dict(self) -> dict[str, Any]:
        return {
            "start_pose": self.start_pose.to_list(),
            "target_room": self.target_room,
            "difficulty": self.difficulty,
            "oracle_steps": self.oracle_steps,
            "start_segment": self.start_segment,
            "initial_heading": self.initial_heading,
            "route": list(self.route),
            "shortest_length": round(self.shortest_length, 9),
            "turns": self.turns,
            "branch_choices": self.branch_choices,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Task":
        x, y, h = data["start_pose"]
        return cls(
            Pose(x, y, h),
            data["target_room"],
            data["difficulty"],
            int(data["oracle_steps"]),
            data.get("start_segment", ""),
            data.get("initial_heading"),
            tuple(data.get("route", ())),
            float(data.get("shortest_length", 0.0)),
            int(data.get("turns", 0)),
            int(data.get("branch_choices", 0)),
        )


def locate_segment(m: SemanticPrioriMap, p: Point) -> str:
    """Segment whose centreline is closest to ``p`` (ties: lower segment number)."""
    best = None
    for seg in m.segments:
        a, b = (m.node_pos(n) for n in seg.endpoints)
        _, _, d = project_onto_segment(p, a, b)
        key = (round(d, 9), seg.number)
        if best is None or key < best[0]:
            best = (key, seg.id)
    assert best is not None
    return best[1]


def route_turns(m: SemanticPrioriMap, start: Point, route: Sequence[str]) -> tuple[int, int]:
    """Direction changes along ``start -> route`` and how many happen at branches."""
    turns = branches = 0
    prev = start
    for i, node in enumerate(route[:-1]):
        here, nxt = m.node_pos(node), m.node_pos(route[i + 1])
        change = wrap_deg(heading_of((nxt[0] - here[0], nxt[1] - here[1])) - heading_of((here[0] - prev[0], here[1] - prev[1])))
        if abs(change) >= 20.0:
            turns += 1
            if m.nodes[node].kind == "branch":
                branches += 1
        prev = here
    return turns, branches


def _classify(difficulty: str, steps: int, turns: int, branches: int) -> bool:
    if difficulty == "easy":
        return 3 <= steps <= 5
    if difficulty == "medium":
        return 6 <= steps <= 10 and turns >= 1
    if difficulty == "hard":
        return steps > 10 and turns >= 2 and branches >= 1
    raise ValueError(f"unknown difficulty {difficulty!r}")


def target_visible(world: World, pose: Pose, room_id: str, views: Iterable[float] = NAVIGATION_VIEWS) -> bool:
    return any(v.room_id == room_id for vs in visible_in_views(world, pose, views).values() for v in vs)


def task_satisfies(world: World, m: SemanticPrioriMap, task: Task) -> bool:
    """Re-derive a task's difficulty predicate from the world and map."""
    seg = locate_segment(m, task.start_pose.xy)
    nav = NavTask(seg, task.target_room)
    route = plan_waypoints(m, nav)
    length = dist(task.start_pose.xy, m.node_pos(route[0])) + route_length(m, route)
    steps = math.ceil(length / world.motion.forward_step - 1e-9)
    turns, branches = route_turns(m, task.start_pose.xy, route)
    if not _classify(task.difficulty, steps, turns, branches):
        return False
    visible = target_visible(world, task.start_pose, task.target_room)
    if task.difficulty == "easy":
        return visible
    if task.difficulty == "medium":
        return not visible
    return True


def generate_tasks(
    world: World,
    m: SemanticPrioriMap,
    difficulty: str,
    n: int,
    seed: int = 0,
    heading_jitter: float = 14.0,
    spacing: float = 0.5,
) -> list[Task]:
    """Sample ``n`` start-pose/target pairs meeting a difficulty's predicate.

    Start poses sit on corridor centrelines, facing the first node of the
    planned route with a uniform heading error of up to ``heading_jitter``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if difficulty not in DIFFICULTIES:
        raise ValueError(f"unknown difficulty {difficulty!r}")
    rng = np.random.default_rng(seed)
    rooms = sorted(m.room_node)
    routes: dict[tuple[str, str], list[str] | None] = {}
    candidates = []
    step = world.motion.forward_step
    for seg in m.segments:
        a_id, b_id = seg.endpoints
        a, b = m.node_pos(a_id), m.node_pos(b_id)
        lo = 2.0 if m.nodes[a_id].kind != "room" else spacing
        hi = seg.length - (2.0 if m.nodes[b_id].kind != "room" else spacing)
        k = 0
        while lo + k * spacing <= hi + 1e-9:
            s = lo + k * spacing
            k += 1
            p = (a[0] + (b[0] - a[0]) * s / seg.length, a[1] + (b[1] - a[1]) * s / seg.length)
            for room in rooms:
                key = (seg.id, room)
                if key not in routes:
                    try:
                        routes[key] = plan_waypoints(m, NavTask(seg.id, room))
                    except (NoRouteError, PlanError):
                        routes[key] = None
                route = routes[key]
                if route is None:
                    continue
                first = route[0]
                other = seg.other(first)
                rest = route_length(m, route)
                length = dist(p, m.node_pos(first)) + rest
                # planner picks the segment end; keep poses where that end is also optimal from p
                if len(route) > 1 and route[1] == other:
                    continue
                alt = plan_waypoints_from(m, other, room, seg.id)
                if alt is not None and dist(p, m.node_pos(other)) + alt < length - 1e-9:
                    continue
                steps = math.ceil(length / step - 1e-9)
                turns, branches = route_turns(m, p, route)
                if _classify(difficulty, steps, turns, branches):
                    candidates.append((seg.id, p, room, route, length, steps, turns, branches))
    jitters = rng.uniform(-heading_jitter, heading_jitter, size=len(candidates)) if candidates else []
    accepted = []
    for cand, jitter in zip(candidates, jitters):
        seg_id, p, room, route, length, steps, turns, branches = cand
        target = m.node_pos(route[0])
        heading = heading_of((target[0] - p[0], target[1] - p[1])) + float(jitter)
        pose = Pose(p[0], p[1], heading)
        if difficulty in ("easy", "medium"):
            visible = target_visible(world, pose, room)
            if visible != (difficulty == "easy"):
                continue
        compass = segment_direction(p, target, m.north)
        accepted.append(
            Task(pose, room, difficulty, steps, seg_id, compass, tuple(route), length, turns, branches)
        )
    if len(accepted) < n:
        raise InfeasibleTaskError(difficulty, len(accepted), n)
    picks = sorted(rng.choice(len(accepted), size=n, replace=False).tolist())
    return [accepted[i] for i in picks]


def plan_waypoints_from(m: SemanticPrioriMap, node: str, room: str, avoid_segment: str) -> float | None:
    """Shortest distance from ``node`` to ``room`` without using ``avoid_segment``."""
    import heapq

    goal = m.room_node[room]
    best = {node: 0.0}
    heap = [(0.0, node)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == goal:
            return d
        if d > best[u]:
            continue
        for v, seg in m.neighbors(u):
            if seg.id == avoid_segment:
                continue
            nd = d + seg.length
            if nd < best.get(v, math.inf):
                best[v] = nd
                heapq.heappush(heap, (nd, v))
    return None
