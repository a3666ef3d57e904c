"""SVG drawing of one episode: planned route versus executed trajectory."""

from __future__ import annotations

from ..geometry import Point
from ..nav_agent import TrialRecord
from ..priori_map import SemanticPrioriMap, segment_path
from ..world_sim import World

MARKED = {"detect": "#2a8a2a", "turn": "#8a2a8a", "fork": "#2a6a9a", "arrival": "#000000"}
SCALE = 10.0
MARGIN = 3.0


def _event_point(record: TrialRecord, event: dict) -> Point:
    t = int(event.get("t", 0))
    idx = min(max(t - 1, 0), len(record.trajectory) - 1)
    return record.trajectory[idx].xy


def render_trajectory(world: World, record: TrialRecord, m: SemanticPrioriMap | None = None) -> str:
    """Planned route in blue, executed trajectory in red, markers at key events."""
    m = m or segment_path(world.spec)
    start = record.trajectory[0].xy if record.trajectory else (0.0, 0.0)
    planned = [start] + [m.node_pos(n) for n in record.route if n in m.nodes] if record.steps_used > 0 else []
    executed = [p.xy for p in record.trajectory] if record.steps_used > 0 else []

    xs = [float(v) for row in world.walls for v in (row[0], row[2])] + [start[0]]
    ys = [float(v) for row in world.walls for v in (row[1], row[3])] + [start[1]]
    for p in planned + executed:
        xs.append(p[0])
        ys.append(p[1])
    x0, x1 = min(xs) - MARGIN, max(xs) + MARGIN
    y0, y1 = min(ys) - MARGIN, max(ys) + MARGIN
    w, h = (x1 - x0) * SCALE, (y1 - y0) * SCALE

    def xy(p: Point) -> tuple[float, float]:
        return (p[0] - x0) * SCALE, (y1 - p[1]) * SCALE

    def pts(seq: list[Point]) -> str:
        return " ".join("{:.2f},{:.2f}".format(*xy(p)) for p in seq)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" viewBox="0 0 {w:.2f} {h:.2f}">',
        '<rect width="100%" height="100%" fill="white"/>',
        '<g id="walls" stroke="#444" stroke-width="1.5">',
    ]
    for row in world.walls:
        ax, ay = xy((float(row[0]), float(row[1])))
        bx, by = xy((float(row[2]), float(row[3])))
        out.append(f'<line x1="{ax:.2f}" y1="{ay:.2f}" x2="{bx:.2f}" y2="{by:.2f}"/>')
    out.append("</g>")
    if len(planned) >= 2:
        out.append(f'<polyline id="planned" points="{pts(planned)}" fill="none" stroke="#1f4fd0" stroke-width="3" stroke-dasharray="8 4"/>')
    if len(executed) >= 2:
        out.append(f'<polyline id="executed" points="{pts(executed)}" fill="none" stroke="#d0201f" stroke-width="2"/>')
    sx, sy = xy(start)
    out.append(f'<circle id="start" class="marker start" cx="{sx:.2f}" cy="{sy:.2f}" r="5" fill="#f0a000"/>')
    if record.steps_used > 0:
        out.append('<g id="events" font-family="sans-serif" font-size="10">')
        for e in record.events:
            color = MARKED.get(e["kind"])
            if color is None:
                continue
            ex, ey = xy(_event_point(record, e))
            out.append(f'<circle class="marker {e["kind"]}" cx="{ex:.2f}" cy="{ey:.2f}" r="4" fill="{color}"/>')
            out.append(f'<text x="{ex + 5:.2f}" y="{ey - 5:.2f}" fill="{color}">{e["kind"]}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
