"""Closed-loop plan execution.

Each cycle the agent determines its current target (a room sign, or a turn
or fork it cannot see), searches for it in a set of views, verifies arrival,
and moves on to the next target.  Turns at unobservable waypoints are
triggered by the wall/floor test, forks by a side opening.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

from .geometry import dist, heading_of, project_onto_segment, wrap_deg
from .perception import (
    LOCALIZATION_VIEWS,
    FloorGoal,
    NoiseModel,
    PanoramaModel,
    Perception,
    SimulatedPerception,
    ViewModel,
    coarse_direction,
    locate_detection,
    pixel_for_bearing,
    quantize_direction,
    refine_heading,
    wall_floor_ratio,
)
from .planner import Action, NavPlan, NavTask, plan
from .priori_map import SemanticPrioriMap, segment_direction
from .world_sim import Motion, Pose, Task, World, locate_segment, step_robot

BASE_VIEWS = (0.0, 30.0, -30.0, 60.0, -60.0, 90.0, -90.0)
OPENING_MIN, OPENING_MAX = 30.0, 150.0  # corridor axis angle counted as a side opening

LOCALIZING, NAVIGATING, DONE, FAILED = "localizing", "navigating", "done", "failed"


class LocalizationFailed(RuntimeError):
    def __init__(self, detections_made: int, pose: Pose):
        self.detections_made = detections_made
        self.pose = pose
        super().__init__(f"localization failed after {detections_made} panorama(s)")


class ForkMismatchError(RuntimeError):
    pass


@dataclass(frozen=True)
class EpisodeConfig:
    step_budget: int | None = None  # None: max(50, 4 * oracle_steps)
    success_radius: float = 2.0
    landmark_reached_radius: float = 2.0
    corner_ratio_threshold: float = 0.6
    corner_near_distance: float = 2.5
    noise: NoiseModel = field(default_factory=NoiseModel)
    fine_refinement: bool = True
    reached_mode: str = "distance"  # or "area"
    reached_area_fraction: float = 0.15
    landmark_approach: bool = False
    approach_bias: float = 0.3
    localization_budget: int = 10
    lookahead: float = 3.0

    def __post_init__(self) -> None:
        for name in ("success_radius", "landmark_reached_radius", "corner_ratio_threshold", "corner_near_distance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.reached_mode not in ("distance", "area"):
            raise ValueError("reached_mode must be 'distance' or 'area'")

    def budget_for(self, oracle_steps: int) -> int:
        return self.step_budget if self.step_budget is not None else max(50, 4 * oracle_steps)


@dataclass
class AgentState:
    pose: Pose
    plan: NavPlan
    phase: str = NAVIGATING
    step_index: int = 0
    pending_prediction: tuple[str, Action] | None = None
    last_action: Action | None = None
    steps_used: int = 0
    detections_made: int = 0
    budget: int = 50
    in_junction: bool = False
    searching: tuple | None = None
    detected: tuple | None = None
    stopped_at: str | None = None
    path_length: float = 0.0
    trajectory: list[Pose] = field(default_factory=list)
    events: list[dict[str, Any]] = field(default_factory=list)

    def log(self, kind: str, **data: Any) -> None:
        self.events.append({"t": self.steps_used, "kind": kind, "step": self.step_index, **data})


@dataclass
class TrialRecord:
    success: int
    path_length: float
    shortest_length: float
    detections_made: int
    steps_used: int
    trajectory: list[Pose]
    events: list[dict[str, Any]]
    phase: str = DONE
    target_room: str = ""
    difficulty: str = ""
    seed: int = 0
    route: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "success": self.success,
            "path_length": round(self.path_length, 9),
            "shortest_length": round(self.shortest_length, 9),
            "detections_made": self.detections_made,
            "steps_used": self.steps_used,
            "phase": self.phase,
            "target_room": self.target_room,
            "difficulty": self.difficulty,
            "seed": self.seed,
            "route": list(self.route),
            "trajectory": [p.to_list() for p in self.trajectory],
        }

    def event_lines(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)


# ---------------------------------------------------------------------------
# small roles


def navigation_views(last_action: Action | None) -> list[float]:
    """Search angles (positive = left); the view behind the last turn is dropped."""
    views = list(BASE_VIEWS)
    if last_action is Action.TurnLeft:
        views.remove(-90.0)
    elif last_action is Action.TurnRight:
        views.remove(90.0)
    return views


def corner_check(view: ViewModel, config: EpisodeConfig) -> str:
    ratio = wall_floor_ratio(view, config.corner_near_distance)
    return "corner" if ratio >= config.corner_ratio_threshold else "corridor"


def _goal_turn(goal: FloorGoal, fine: bool, image_width: int, fov: float, bearing: float | None = None) -> float:
    """Rotation toward a corridor goal.

    The coarse role only knows which way the corridor runs and answers on the
    30-degree grid; the fine role refines to the exact floor point.
    """
    if not fine:
        return quantize_direction(goal.axis_bearing)
    return _refined(goal.bearing if bearing is None else bearing, image_width, fov)


def _refined(bearing: float, image_width: int, fov: float) -> float:
    """Coarse 30-degree guess, then the pixel-goal inverse projection inside that view."""
    coarse = quantize_direction(bearing)
    view = ViewModel(coarse, image_width, fov)
    pixel = min(pixel_for_bearing(wrap_deg(bearing - coarse), image_width, fov), image_width - 1e-6)
    return refine_heading(view, pixel)


def _pick_goal(goals: list[FloorGoal], want: float) -> FloorGoal | None:
    ahead = [g for g in goals if abs(g.bearing) <= 135.0]
    if not ahead:
        return None
    return min(ahead, key=lambda g: (abs(wrap_deg(g.bearing - want)), g.corridor))


def _side_goals(goals: list[FloorGoal], side: int) -> list[FloorGoal]:
    """Goals on corridors running off to one side (+1 left, -1 right) of the heading."""
    return [g for g in goals if OPENING_MIN <= g.axis_bearing * side <= OPENING_MAX]


def fork_select(
    state: AgentState,
    m: SemanticPrioriMap,
    world: World,
    perception: Perception,
    plan_action: Action,
    config: EpisodeConfig | None = None,
) -> float:
    """Absolute heading into the corridor branch on the planned side."""
    config = config or EpisodeConfig()
    if not plan_action.is_fork:
        raise ValueError(f"{plan_action} is not a fork action")
    perception.capture_panorama(world, state.pose, navigation_views(state.last_action))
    sign = plan_action.turn_sign
    goals = _side_goals(perception.floor_goals(world, state.pose, config.lookahead), sign)
    if not goals:
        raise ForkMismatchError(f"no corridor opening on the {'left' if sign > 0 else 'right'}")
    goal = min(goals, key=lambda g: (abs(abs(g.bearing) - 90.0), g.corridor))
    rel = _goal_turn(goal, config.fine_refinement, perception.image_width, world.motion.fov)
    return (state.pose.heading + rel) % 360.0


# ---------------------------------------------------------------------------
# localization


def localize(
    m: SemanticPrioriMap,
    world: World,
    pose: Pose,
    perception: Perception,
    config: EpisodeConfig | None = None,
    events: list | None = None,
) -> tuple[str, str, int, Pose]:
    """Find the current segment from any two distinct signs.

    Returns ``(segment id, compass heading estimate, panoramas used, pose)``.
    Moves forward along the corridor between panoramas while fewer than two
    signs are seen.
    """
    config = config or EpisodeConfig()
    attempts = 0
    while True:
        pano = perception.capture_panorama(world, pose, LOCALIZATION_VIEWS)
        attempts += 1
        labels = pano.labels
        if events is not None:
            events.append({"kind": "localize", "attempt": attempts, "labels": labels})
        if len(labels) >= 2:
            seg = segment_from_landmarks(m, labels)
            return seg, heading_estimate(m, seg, pano), attempts, pose
        if attempts >= config.localization_budget:
            raise LocalizationFailed(attempts, pose)
        goal = _pick_goal(perception.floor_goals(world, pose, config.lookahead), 0.0)
        if goal is not None:
            pose, _ = step_robot(world, pose, Motion.RotateLeft, goal.bearing)
        pose, _ = step_robot(world, pose, Motion.Forward)


def segment_from_landmarks(m: SemanticPrioriMap, labels: list[str]) -> str:
    """Segment flanked by a detected pair, else the one closest to the two nearest signs."""
    rooms = [l for l in labels if l in m.room_node]
    if len(rooms) < 2:
        raise ValueError("need two known room labels")
    pairs = [(i + j, rooms[i], rooms[j]) for i in range(len(rooms)) for j in range(i + 1, len(rooms))]
    pairs.sort(key=lambda p: p[0])
    for _, a, b in pairs:
        for seg in m.segments:
            if set(seg.flanking_rooms) == {a, b}:
                return seg.id
    a, b = rooms[0], rooms[1]
    pa, pb = m.node_pos(m.room_node[a]), m.node_pos(m.room_node[b])
    best = None
    for seg in m.segments:
        u, v = (m.node_pos(n) for n in seg.endpoints)
        score = project_onto_segment(pa, u, v)[2] + project_onto_segment(pb, u, v)[2]
        key = (round(score, 9), seg.number)
        if best is None or key < best[0]:
            best = (key, seg.id)
    return best[1]


def heading_estimate(m: SemanticPrioriMap, seg_id: str, pano: PanoramaModel) -> str:
    seg = m.segment_by_id[seg_id]
    best = None
    for v in pano.views:
        for d in v.detections:
            if d.label in m.room_node:
                off = abs(wrap_deg(v.view_angle + d.bearing))
                if best is None or off < best[0]:
                    best = (off, d.label)
    node = m.room_node[best[1]]
    a, b = seg.endpoints
    if node == b:
        return segment_direction(m.node_pos(a), m.node_pos(b), m.north)
    if node == a:
        return segment_direction(m.node_pos(b), m.node_pos(a), m.north)
    pa, pb = m.node_pos(a), m.node_pos(b)
    mid = ((pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2)
    return segment_direction(mid, m.node_pos(node), m.north)


# ---------------------------------------------------------------------------
# navigation


def _current_target(state: AgentState, m: SemanticPrioriMap) -> tuple[str, str, Action]:
    """``("room", label, action)`` for a sign, ``("waypoint", id, action)`` otherwise."""
    if state.pending_prediction is not None:
        wp, action = state.pending_prediction
        return "waypoint", wp, action
    step = state.plan.steps[state.step_index]
    node_id = m.resolve(step.landmark)
    node = m.nodes[node_id]
    if node.kind == "room":
        return "room", node.rooms[0], step.action
    if node.rooms:
        return "room", step.landmark if step.landmark in m.room_node else node.rooms[0], step.action
    return "waypoint", node_id, step.action


def _target_update(state: AgentState, kind: str, name: str, action: Action) -> None:
    state.log("target_update", target=name, action=action.value)
    if state.pending_prediction is not None and kind == "waypoint" and name == state.pending_prediction[0]:
        state.pending_prediction = None
        state.step_index += 1
        return
    step = state.plan.steps[state.step_index]
    if step.predicted is not None:
        state.pending_prediction = step.predicted
    else:
        state.step_index += 1


def _reached(det, config: EpisodeConfig) -> bool:
    if config.reached_mode == "area":
        return det.mask_area_fraction >= config.reached_area_fraction
    return det.distance <= config.landmark_reached_radius


def navigate_step(
    state: AgentState,
    m: SemanticPrioriMap,
    world: World,
    perception: Perception,
    config: EpisodeConfig,
) -> AgentState:
    """One search / verify / update / move cycle."""
    if state.phase != NAVIGATING:
        return state
    if state.steps_used >= state.budget:
        state.phase = FAILED
        state.log("budget_exhausted")
        return state
    state.steps_used += 1
    fine = config.fine_refinement
    fov = world.motion.fov
    width = perception.image_width

    kind, name, action = _current_target(state, m)
    views = navigation_views(state.last_action)
    pano = perception.capture_panorama(world, state.pose, views)
    if state.searching != (state.step_index, name):
        state.searching = (state.step_index, name)
        state.log("search", target=name, action=action.value)

    goals_here = perception.floor_goals(world, state.pose, config.lookahead)
    left_open = bool(_side_goals(goals_here, 1))
    right_open = bool(_side_goals(goals_here, -1))
    if state.in_junction and not (left_open or right_open):
        state.in_junction = False

    want = 0.0
    if kind == "waypoint":
        sign = action.turn_sign
        if action.is_fork:
            if not state.in_junction and (left_open if sign > 0 else right_open):
                state.log("verification", target=name, cue="opening")
                try:
                    heading = fork_select(state, m, world, perception, action, config)
                except ForkMismatchError as exc:
                    state.log("fork_mismatch", target=name, detail=str(exc))
                    state.phase = FAILED
                    return state
                state.pose, _ = step_robot(world, state.pose, Motion.RotateLeft, wrap_deg(heading - state.pose.heading))
                state.log("fork", target=name, action=action.value, heading=round(state.pose.heading, 6))
                state.last_action = action
                state.in_junction = True
                _target_update(state, kind, name, action)
                return _advance(state, world, perception, config, None, pre_rotated=True)
        elif sign != 0:
            forward = pano.view(0.0)
            if corner_check(forward, config) == "corner":
                state.log("verification", target=name, cue="corner", ratio=wall_floor_ratio(forward, config.corner_near_distance))
                motion = Motion.RotateLeft if sign > 0 else Motion.RotateRight
                state.pose, _ = step_robot(world, state.pose, motion, 90.0)
                state.log("turn", target=name, action=action.value, heading=round(state.pose.heading, 6))
                state.last_action = action
                _target_update(state, kind, name, action)
        else:
            node = m.nodes[name]
            if node.kind != "branch" or (not state.in_junction and (left_open or right_open)):
                state.log("verification", target=name, cue="opening" if node.kind == "branch" else "pass")
                state.in_junction = state.in_junction or node.kind == "branch"
                state.last_action = action
                _target_update(state, kind, name, action)
    else:
        found = locate_detection(pano, name)
        if found is not None and _reached(found[1], config):
            view, det = found
            state.log("verification", target=name, distance=round(det.distance, 6))
            if action is Action.Stop:
                state.stopped_at = name
                state.log("target_update", target=name, action=action.value)
                state.log("arrival", target=name)
                state.phase = DONE
                return state
            state.last_action = action
            _target_update(state, kind, name, action)
        elif found is not None:
            view, det = found
            if state.detected != (state.step_index, name):
                state.detected = (state.step_index, name)
                state.log("detect", target=name, distance=round(det.distance, 6))
            want = refine_heading(view, det.pixel_center) if fine else coarse_direction(pano, name)
            return _advance(state, world, perception, config, want)
    return _advance(state, world, perception, config, want if kind == "room" else 0.0)


def _advance(
    state: AgentState,
    world: World,
    perception: Perception,
    config: EpisodeConfig,
    want: float | None,
    pre_rotated: bool = False,
) -> AgentState:
    """Rotate toward the chosen corridor goal and take one forward step."""
    if not pre_rotated:
        goals = perception.floor_goals(world, state.pose, config.lookahead)
        goal = _pick_goal(goals, want if want is not None else 0.0)
        if goal is not None:
            bearing = goal.bearing
            if config.landmark_approach and want is not None and want != 0.0:
                bearing = _biased(state.pose, goal, want, config.approach_bias)
            rel = _goal_turn(goal, config.fine_refinement, perception.image_width, world.motion.fov, bearing)
            if abs(rel) > 1e-12:
                state.pose, _ = step_robot(world, state.pose, Motion.RotateLeft, rel)
    before = state.pose
    state.pose, collided = step_robot(world, state.pose, Motion.Forward)
    if collided:
        state.log("collision", pose=before.to_list())
    state.path_length += dist(before.xy, state.pose.xy)
    state.trajectory.append(state.pose)
    return state


def _biased(pose: Pose, goal: FloorGoal, landmark_bearing: float, bias: float) -> float:
    r = math.radians(pose.heading + goal.bearing)
    gx, gy = pose.x + goal.distance * math.cos(r), pose.y + goal.distance * math.sin(r)
    lr = math.radians(pose.heading + landmark_bearing)
    # shift the goal sideways toward the landmark's side
    ax, ay = math.cos(r), math.sin(r)
    lx, ly = math.cos(lr), math.sin(lr)
    side = 1.0 if ax * ly - ay * lx > 0 else -1.0
    gx, gy = gx - side * ay * bias, gy + side * ax * bias
    return wrap_deg(heading_of((gx - pose.x, gy - pose.y)) - pose.heading)


def run_episode(
    world: World,
    m: SemanticPrioriMap,
    task: Task,
    nav_plan: NavPlan | None = None,
    config: EpisodeConfig | None = None,
    perception: Perception | None = None,
    seed: int = 0,
) -> TrialRecord:
    """Localize if needed, then run the closed loop to a terminal phase."""
    config = config or EpisodeConfig()
    if perception is None:
        perception = SimulatedPerception(config.noise, rng=_episode_rng(config.noise, seed))
    events: list[dict[str, Any]] = []
    pose = task.start_pose
    detections = 0
    start_segment = task.start_segment
    if not start_segment:
        try:
            start_segment, _, detections, pose = localize(m, world, pose, perception, config, events)
        except LocalizationFailed as exc:
            events.append({"kind": "localization_failed", "attempts": exc.detections_made})
            return TrialRecord(0, 0.0, max(task.shortest_length, 1e-9), exc.detections_made, 0, [task.start_pose],
                               events, FAILED, task.target_room, task.difficulty, seed, task.route)
    if nav_plan is None:
        nav_plan = plan(m, NavTask(start_segment, task.target_room, task.initial_heading))
    state = AgentState(pose=pose, plan=nav_plan, detections_made=detections, budget=config.budget_for(task.oracle_steps))
    state.events = events
    state.trajectory.append(pose)
    while state.phase == NAVIGATING:
        navigate_step(state, m, world, perception, config)
    success = 0
    if state.phase == DONE:
        door = world.landmark(task.target_room).pos
        if state.stopped_at == task.target_room and dist(state.pose.xy, door) <= config.success_radius:
            success = 1
        else:
            state.log("reached_wrong_target", target=state.stopped_at, expected=task.target_room)
    shortest = task.shortest_length if task.shortest_length > 0 else _route_geometry_length(m, task, nav_plan)
    return TrialRecord(success, state.path_length, shortest, state.detections_made, state.steps_used,
                       state.trajectory, state.events, state.phase, task.target_room, task.difficulty, seed, task.route)


def _route_geometry_length(m: SemanticPrioriMap, task: Task, nav_plan: NavPlan) -> float:
    from .planner import plan_waypoints, route_length

    seg = task.start_segment or locate_segment(m, task.start_pose.xy)
    route = plan_waypoints(m, NavTask(seg, task.target_room))
    return max(dist(task.start_pose.xy, m.node_pos(route[0])) + route_length(m, route), 1e-9)


def _episode_rng(noise: NoiseModel, seed: int):
    import numpy as np

    return np.random.default_rng([noise.seed, seed])
