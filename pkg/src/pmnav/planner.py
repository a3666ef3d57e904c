"""Global route planning over the segment graph.

Planning follows three steps: relate the start segment to the target room,
pick the waypoints of the shortest route, and turn consecutive segment
directions into first-person actions.  ``render_hcot_prompt`` writes the
same three steps out as a prompt for an external vision-language model, and
``parse_plan_response`` reads that model's bracket-arrow answer back.
"""

from __future__ import annotations

import enum
import heapq
import json
import math
import re
from dataclasses import dataclass
from typing import Any, Sequence

from .geometry import Point, dist, heading_of, wrap_deg
from .priori_map import COMPASS, SemanticPrioriMap, render_semantic_text, segment_direction

SIGHT_LINK = 3.0
STRAIGHT_TOLERANCE = 20.0


class PlanError(ValueError):
    pass


class NoRouteError(PlanError):
    pass


class InvalidRouteError(PlanError):
    pass


class PlanParseError(PlanError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line} column {column}: " if line else ""
        super().__init__(where + message)


class EmptyPlanError(PlanParseError):
    pass


class UnknownLandmarkError(PlanParseError):
    pass


class Action(str, enum.Enum):
    GoStraight = "Go straight"
    TurnLeft = "Turn left"
    TurnRight = "Turn right"
    TakeLeftFork = "Take left fork"
    TakeRightFork = "Take right fork"
    Stop = "Stop"

    @property
    def turn_sign(self) -> int:
        """+1 for left, -1 for right, 0 otherwise."""
        if self in (Action.TurnLeft, Action.TakeLeftFork):
            return 1
        if self in (Action.TurnRight, Action.TakeRightFork):
            return -1
        return 0

    @property
    def is_fork(self) -> bool:
        return self in (Action.TakeLeftFork, Action.TakeRightFork)

    @classmethod
    def parse(cls, text: str) -> "Action":
        key = re.sub(r"[\s_]+", "", text).lower()
        for action in cls:
            if key in (action.name.lower(), action.value.replace(" ", "").lower()):
                return action
        raise ValueError(text)


@dataclass(frozen=True)
class NavTask:
    start_segment: str
    target_room: str
    initial_heading: str | None = None  # compass label, None when unknown


@dataclass(frozen=True)
class PlanStep:
    landmark: str
    action: Action
    predicted: tuple[str, Action] | None = None


@dataclass(frozen=True)
class NavPlan:
    steps: tuple[PlanStep, ...]
    source: str = "symbolic"

    def __len__(self) -> int:
        return len(self.steps)

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": self.source,
            "steps": [
                {
                    "landmark": s.landmark,
                    "action": s.action.value,
                    **({"predicted": [s.predicted[0], s.predicted[1].value]} if s.predicted else {}),
                }
                for s in self.steps
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NavPlan":
        steps = []
        for s in data["steps"]:
            pred = s.get("predicted")
            steps.append(
                PlanStep(s["landmark"], Action.parse(s["action"]), (pred[0], Action.parse(pred[1])) if pred else None)
            )
        return cls(tuple(steps), data.get("source", "symbolic"))


@dataclass(frozen=True)
class SpatialRelation:
    target_bearing: str
    hop_count: int


@dataclass(frozen=True)
class ValidationReport:
    reaches_target: bool
    route_valid: bool
    length_ratio: float
    walked: tuple[str, ...] = ()
    problems: tuple[str, ...] = ()

    @property
    def succeeds(self) -> bool:
        return self.reaches_target and self.route_valid


# ---------------------------------------------------------------------------
# step 2: waypoints


def _check_task(m: SemanticPrioriMap, task: NavTask) -> None:
    if task.start_segment not in m.segment_by_id:
        raise PlanError(f"unknown start segment {task.start_segment}")
    if task.target_room not in m.room_node:
        raise PlanError(f"unknown target room {task.target_room}")


def route_length(m: SemanticPrioriMap, nodes: Sequence[str]) -> float:
    total = 0.0
    for u, v in zip(nodes, nodes[1:]):
        seg = m.segment_between(u, v)
        if seg is None:
            raise InvalidRouteError(f"{u} and {v} are not adjacent")
        total += seg.length
    return total


def plan_waypoints(m: SemanticPrioriMap, task: NavTask) -> list[str]:
    """Shortest route from either end of the start segment to the target room.

    Ties go to the route with fewer nodes, then to the lexicographically
    smaller node sequence.  The start segment itself is never part of the
    route.
    """
    _check_task(m, task)
    start = m.segment_by_id[task.start_segment]
    goal = m.room_node[task.target_room]
    heap: list[tuple[float, int, tuple[str, ...]]] = []
    for node in sorted(start.endpoints):
        heapq.heappush(heap, (0.0, 1, (node,)))
    done: set[str] = set()
    while heap:
        d, hops, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == goal:
            return list(path)
        for v, seg in m.neighbors(u):
            if v in done or seg.id == start.id:
                continue
            heapq.heappush(heap, (round(d + seg.length, 9), hops + 1, path + (v,)))
    raise NoRouteError(f"no route from {task.start_segment} to {task.target_room}")


# ---------------------------------------------------------------------------
# step 1: spatial relation


def relate(m: SemanticPrioriMap, task: NavTask) -> SpatialRelation:
    route = plan_waypoints(m, task)
    seg = m.segment_by_id[task.start_segment]
    a, b = (m.node_pos(n) for n in seg.endpoints)
    mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
    center = m.spec.room_by_id[task.target_room].center
    return SpatialRelation(segment_direction(mid, center, m.north), len(route))


# ---------------------------------------------------------------------------
# step 3: actions


def compass_vector(label: str, north: Point) -> Point:
    k = COMPASS.index(label)
    # rotate north clockwise by k * 90 degrees
    x, y = north
    for _ in range(k):
        x, y = y, -x
    return (x, y)


def initial_heading_for(m: SemanticPrioriMap, task: NavTask, first_node: str) -> str:
    """Direction of travel along the start segment toward ``first_node``."""
    seg = m.segment_by_id[task.start_segment]
    other = seg.other(first_node)
    return segment_direction(m.node_pos(other), m.node_pos(first_node), m.north)


def turn_action(incoming: Point, outgoing: Point, at_branch: bool) -> Action:
    change = wrap_deg(heading_of(outgoing) - heading_of(incoming))
    if abs(change) < STRAIGHT_TOLERANCE:
        return Action.GoStraight
    if abs(change) > 180.0 - STRAIGHT_TOLERANCE:
        raise InvalidRouteError("route reverses direction")
    if change > 0:
        return Action.TakeLeftFork if at_branch else Action.TurnLeft
    return Action.TakeRightFork if at_branch else Action.TurnRight


def observable(m: SemanticPrioriMap, node_id: str, sight_link: float = SIGHT_LINK) -> bool:
    """A key waypoint is observable when a room sign sits within ``sight_link`` of it."""
    node = m.nodes[node_id]
    if node.rooms:
        return True
    return any(
        n.kind == "room" and dist(n.pos, node.pos) <= sight_link for n in m.nodes.values()
    )


def plan_actions(
    m: SemanticPrioriMap,
    waypoints: Sequence[str],
    initial_heading: str,
    sight_link: float = SIGHT_LINK,
) -> NavPlan:
    if not waypoints:
        raise InvalidRouteError("empty route")
    incoming = compass_vector(initial_heading, m.north)
    steps: list[PlanStep] = []
    last = len(waypoints) - 1
    for i, node_id in enumerate(waypoints):
        node = m.nodes[node_id]
        landmark = m.label(node_id) if node.kind == "room" else (node.rooms[0] if node.rooms else node_id)
        if i == last:
            steps.append(PlanStep(landmark, Action.Stop))
            break
        nxt = waypoints[i + 1]
        if m.segment_between(node_id, nxt) is None:
            raise InvalidRouteError(f"{node_id} and {nxt} are not adjacent")
        p, q = node.pos, m.node_pos(nxt)
        outgoing = (q[0] - p[0], q[1] - p[1])
        action = turn_action(incoming, outgoing, node.kind == "branch")
        incoming = outgoing
        if (
            action is not Action.GoStraight
            and node.kind != "room"
            and i > 0
            and steps
            and steps[-1].predicted is None
            and m.nodes[waypoints[i - 1]].kind == "room"
            and not observable(m, node_id, sight_link)
        ):
            prev = steps[-1]
            steps[-1] = PlanStep(prev.landmark, prev.action, (node_id, action))
            continue
        steps.append(PlanStep(landmark, action))
    return NavPlan(tuple(steps), "symbolic")


def plan(m: SemanticPrioriMap, task: NavTask, sight_link: float = SIGHT_LINK) -> NavPlan:
    """All three planning steps for a task."""
    route = plan_waypoints(m, task)
    heading = task.initial_heading or initial_heading_for(m, task, route[0])
    return plan_actions(m, route, heading, sight_link)


def plan_nodes(m: SemanticPrioriMap, p: NavPlan) -> list[str]:
    """Node sequence named by a plan, predicted waypoints included."""
    out = []
    for step in p.steps:
        node = m.resolve(step.landmark)
        if node is None:
            raise UnknownLandmarkError(f"landmark {step.landmark} not in map")
        out.append(node)
        if step.predicted:
            pnode = m.resolve(step.predicted[0])
            if pnode is None:
                raise UnknownLandmarkError(f"landmark {step.predicted[0]} not in map")
            out.append(pnode)
    return out


# ---------------------------------------------------------------------------
# prompt and answer grammar


TAG_LEGEND = """\
The annotated map uses these visual tags:
- roomN: a room, labelled at its centre; its sign hangs beside its door on the corridor wall.
- segN: a corridor segment between two consecutive waypoints, labelled at its midpoint.
- start / turnN / branchN / endN: key waypoints (red dots) where the corridor starts, turns, forks or ends.
A segment written segN(roomA–roomB) lies between the doors of roomA and roomB; an empty side means the segment ends at a key waypoint."""

REASONING_STEPS = (
    "Step 1 (relative relation): work out where the target lies relative to the robot on the map.",
    "Step 2 (key waypoints): list, in order, the rooms, turns and forks on the shortest way there.",
    "Step 3 (first-person actions): turn that list into actions as seen facing the direction of travel.",
)

ANSWER_GRAMMAR = """\
Answer with one line per plan step, in travel order, using exactly this form:
{landmark: Action}
where landmark is a room id or key waypoint id and Action is one of: Go straight, Turn left, Turn right, Take left fork, Take right fork, Stop.
If a turn happens at a waypoint with no visible sign, attach it to the preceding room step:
{room8: Go straight} -> {turn2: Turn left}
The last line must be {targetroom: Stop}."""


def render_hcot_prompt(m: SemanticPrioriMap, task: NavTask) -> str:
    _check_task(m, task)
    heading = task.initial_heading or "unknown"
    parts = [
        "You are guiding a robot through a building whose corridors are described by the map below.",
        "",
        TAG_LEGEND,
        "",
        "Semantic priori-map:",
        render_semantic_text(m).rstrip("\n"),
        "",
        "Reason in three stages before answering:",
        *REASONING_STEPS,
        "",
        f"Task: the robot starts at {task.start_segment} facing {heading} and targets the {task.target_room} area.",
        "",
        ANSWER_GRAMMAR,
    ]
    return "\n".join(parts) + "\n"


def format_plan(p: NavPlan) -> str:
    lines = []
    for s in p.steps:
        line = f"{{{s.landmark}: {s.action.value}}}"
        if s.predicted:
            line += f" -> {{{s.predicted[0]}: {s.predicted[1].value}}}"
        lines.append(line)
    return "\n".join(lines) + "\n"


_BRACE = re.compile(r"\{\s*([A-Za-z][\w-]*)\s*:\s*([A-Za-z][A-Za-z _]*?)\s*\}")
_ARROW = re.compile(r"\s*(?:->|→)\s*")


def parse_plan_response(text: str, m: SemanticPrioriMap | None = None) -> NavPlan:
    """Read ``{landmark: Action}`` lines, optionally ``-> {waypoint: Action}``.

    Lines that do not start with ``{`` are treated as commentary and skipped.
    """
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped.startswith("{"):
            continue
        offset = len(raw) - len(raw.lstrip())
        pos = 0
        pairs: list[tuple[str, Action]] = []
        while True:
            match = _BRACE.match(stripped, pos)
            if match is None:
                raise PlanParseError("expected '{landmark: Action}'", lineno, offset + pos + 1)
            try:
                action = Action.parse(match.group(2))
            except ValueError:
                raise PlanParseError(f"unknown action '{match.group(2)}'", lineno, offset + match.start(2) + 1)
            landmark = match.group(1)
            if m is not None and m.resolve(landmark) is None:
                raise UnknownLandmarkError(f"landmark '{landmark}' not in map", lineno, offset + match.start(1) + 1)
            pairs.append((landmark, action))
            pos = match.end()
            if pos == len(stripped):
                break
            arrow = _ARROW.match(stripped, pos)
            if arrow is None or len(pairs) == 2:
                raise PlanParseError("unexpected text after step", lineno, offset + pos + 1)
            pos = arrow.end()
        (landmark, action), predicted = pairs[0], (pairs[1] if len(pairs) == 2 else None)
        steps.append(PlanStep(landmark, action, predicted))
    if not steps:
        raise EmptyPlanError("reply contains no plan steps")
    return NavPlan(tuple(steps), "external-backend")


# ---------------------------------------------------------------------------
# validation


def _walk_start(m: SemanticPrioriMap, task: NavTask, first_node: str | None) -> tuple[str, Point]:
    seg = m.segment_by_id[task.start_segment]
    a, b = seg.endpoints
    pa, pb = m.node_pos(a), m.node_pos(b)
    if task.initial_heading is not None:
        toward_b = segment_direction(pa, pb, m.north) == task.initial_heading
        toward_a = segment_direction(pb, pa, m.north) == task.initial_heading
        if toward_b != toward_a:
            return (b, (pb[0] - pa[0], pb[1] - pa[1])) if toward_b else (a, (pa[0] - pb[0], pa[1] - pb[1]))
    if first_node is not None and first_node in (a, b):
        end = first_node
    elif first_node is not None:
        da = _graph_distance(m, a, first_node, avoid=seg.id)
        db = _graph_distance(m, b, first_node, avoid=seg.id)
        end = a if da <= db else b
    else:
        end = b
    other = seg.other(end)
    pe, po = m.node_pos(end), m.node_pos(other)
    return end, (pe[0] - po[0], pe[1] - po[1])


def _graph_distance(m: SemanticPrioriMap, src: str, dst: str, avoid: str | None = None) -> float:
    best = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == dst:
            return d
        if d > best.get(u, math.inf):
            continue
        for v, seg in m.neighbors(u):
            if seg.id == avoid:
                continue
            nd = d + seg.length
            if nd < best.get(v, math.inf):
                best[v] = nd
                heapq.heappush(heap, (nd, v))
    return math.inf


def validate_plan(m: SemanticPrioriMap, task: NavTask, p: NavPlan) -> ValidationReport:
    """Execute a plan symbolically and compare it with the optimal route.

    A walker follows the corridor, applying each step's action when it reaches
    the step's landmark and going straight through unmentioned waypoints.  It
    halts at a Stop, at a dead end, or where the corridor turns without an
    instruction.
    """
    problems: list[str] = []
    try:
        optimal = plan_waypoints(m, task)
    except NoRouteError:
        return ValidationReport(False, False, math.inf, problems=("target unreachable",))
    start_seg = m.segment_by_id[task.start_segment]
    half = start_seg.length / 2
    optimal_len = half + route_length(m, optimal)

    instructions: list[tuple[str, Action]] = []
    for step in p.steps:
        node = m.resolve(step.landmark)
        if node is None:
            return ValidationReport(False, False, math.inf, problems=(f"unknown landmark {step.landmark}",))
        instructions.append((node, step.action))
        if step.predicted:
            pnode = m.resolve(step.predicted[0])
            if pnode is None:
                return ValidationReport(False, False, math.inf, problems=(f"unknown landmark {step.predicted[0]}",))
            instructions.append((pnode, step.predicted[1]))
    if not instructions:
        return ValidationReport(False, False, math.inf, problems=("empty plan",))

    node, heading = _walk_start(m, task, instructions[0][0])
    walked = [node]
    length = half
    k = 0
    stopped = False
    limit = 4 * len(m.nodes) + 4
    while len(walked) <= limit:
        action = None
        if k < len(instructions) and instructions[k][0] == node:
            action = instructions[k][1]
            k += 1
        if action is Action.Stop:
            stopped = True
            break
        choice = _pick_exit(m, node, heading, action)
        if choice is None:
            problems.append(f"cannot execute {action.value if action else 'continue'} at {node}")
            break
        nxt, seg = choice
        p0, p1 = m.node_pos(node), m.node_pos(nxt)
        heading = (p1[0] - p0[0], p1[1] - p0[1])
        length += seg.length
        node = nxt
        walked.append(node)
    goal = m.room_node[task.target_room]
    reaches = stopped and node == goal
    if k < len(instructions):
        problems.append(f"{len(instructions) - k} instruction(s) never reached")
    route_valid = k == len(instructions) and not any(p.startswith("cannot") for p in problems)
    ratio = length / optimal_len if reaches else math.inf
    return ValidationReport(reaches, route_valid, ratio, tuple(walked), tuple(problems))


def _pick_exit(m: SemanticPrioriMap, node: str, heading: Point, action: Action | None):
    options = []
    for nxt, seg in m.neighbors(node):
        p0, p1 = m.node_pos(node), m.node_pos(nxt)
        change = wrap_deg(heading_of((p1[0] - p0[0], p1[1] - p0[1])) - heading_of(heading))
        if abs(change) > 180.0 - STRAIGHT_TOLERANCE:
            continue
        options.append((change, nxt, seg))
    sign = action.turn_sign if action is not None else 0
    if sign == 0:
        straight = [o for o in options if abs(o[0]) < STRAIGHT_TOLERANCE]
        if not straight:
            return None
        best = min(straight, key=lambda o: abs(o[0]))
    else:
        side = [o for o in options if o[0] * sign >= STRAIGHT_TOLERANCE]
        if not side:
            return None
        best = min(side, key=lambda o: abs(abs(o[0]) - 90.0))
    return best[1], best[2]


def plan_to_json(p: NavPlan) -> str:
    return json.dumps(p.to_dict(), indent=2, ensure_ascii=False) + "\n"
