"""Small 2D helpers shared by the map compiler, the world and perception."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

Point = tuple[float, float]

EPS = 1e-9


def sub(a: Point, b: Point) -> Point:
    return (a[0] - b[0], a[1] - b[1])


def dist(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def project_onto_segment(p: Point, a: Point, b: Point) -> tuple[Point, float, float]:
    """Orthogonal projection of ``p`` onto segment ``ab``.

    Returns ``(point, arc_length_from_a, distance)``; the projection is clamped
    to the segment.
    """
    dx, dy = b[0] - a[0], b[1] - a[1]
    length_sq = dx * dx + dy * dy
    if length_sq == 0.0:
        return a, 0.0, dist(p, a)
    t = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / length_sq
    t = min(1.0, max(0.0, t))
    q = (a[0] + t * dx, a[1] + t * dy)
    return q, t * math.sqrt(length_sq), dist(p, q)


def normalize_deg(angle: float) -> float:
    """Map an angle to [0, 360)."""
    a = math.fmod(angle, 360.0)
    if a < 0:
        a += 360.0
    if a >= 360.0:
        a -= 360.0
    return a


def wrap_deg(angle: float) -> float:
    """Map an angle to (-180, 180]."""
    a = normalize_deg(angle)
    return a - 360.0 if a > 180.0 else a


def heading_of(v: Point) -> float:
    """Counterclockwise angle of ``v`` from the +x axis, in [0, 360)."""
    return normalize_deg(math.degrees(math.atan2(v[1], v[0])))


def unit(angle_deg: float) -> Point:
    r = math.radians(angle_deg)
    return (math.cos(r), math.sin(r))


def ray_distances(
    origin: Point, angles_deg: Sequence[float] | np.ndarray, walls: np.ndarray, max_range: float = math.inf
) -> np.ndarray:
    """Distance along each ray to the nearest wall segment.

    ``walls`` is an ``(n, 4)`` array of ``x1, y1, x2, y2`` rows. Rays that hit
    nothing report ``max_range``.
    """
    angles = np.radians(np.asarray(angles_deg, dtype=float))
    out = np.full(angles.shape, max_range, dtype=float)
    if len(walls) == 0 or angles.size == 0:
        return out
    dx = np.cos(angles)[:, None]
    dy = np.sin(angles)[:, None]
    x1, y1, x2, y2 = (walls[:, i][None, :] for i in range(4))
    ex, ey = x2 - x1, y2 - y1
    denom = dx * ey - dy * ex
    ox, oy = x1 - origin[0], y1 - origin[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ox * ey - oy * ex) / denom
        u = (ox * dy - oy * dx) / denom
    hit = (np.abs(denom) > EPS) & (t >= 0.0) & (u >= -EPS) & (u <= 1.0 + EPS)
    t = np.where(hit, t, np.inf)
    nearest = t.min(axis=1)
    return np.minimum(out, nearest)


def segment_blocked(a: Point, b: Point, walls: np.ndarray, end_margin: float = 1e-3) -> bool:
    """True if segment ``ab`` crosses a wall before ``end_margin`` short of ``b``."""
    length = dist(a, b)
    if length <= end_margin or len(walls) == 0:
        return False
    angle = math.degrees(math.atan2(b[1] - a[1], b[0] - a[0]))
    d = ray_distances(a, [angle], walls)[0]
    return bool(d < length - end_margin)


def segment_wall_clearance(a: Point, b: Point, walls: np.ndarray) -> float:
    """Minimum distance between segment ``ab`` and any wall segment."""
    if len(walls) == 0:
        return math.inf
    p = np.array([a, b], dtype=float)
    best = math.inf
    # distances from the motion endpoints to each wall and from wall endpoints to the motion
    for q in p:
        best = min(best, float(_point_segments_distance(q, walls).min()))
    ends = np.vstack([walls[:, 0:2], walls[:, 2:4]])
    motion = np.array([[a[0], a[1], b[0], b[1]]])
    for q in ends:
        best = min(best, float(_point_segments_distance(q, motion).min()))
    if _any_crossing(a, b, walls):
        return 0.0
    return best


def _point_segments_distance(q: np.ndarray, segs: np.ndarray) -> np.ndarray:
    ax, ay, bx, by = segs[:, 0], segs[:, 1], segs[:, 2], segs[:, 3]
    dx, dy = bx - ax, by - ay
    lsq = dx * dx + dy * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(lsq > 0, ((q[0] - ax) * dx + (q[1] - ay) * dy) / lsq, 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(ax + t * dx - q[0], ay + t * dy - q[1])


def _any_crossing(a: Point, b: Point, walls: np.ndarray) -> bool:
    ax, ay, bx, by = a[0], a[1], b[0], b[1]
    x1, y1, x2, y2 = walls[:, 0], walls[:, 1], walls[:, 2], walls[:, 3]

    def orient(px, py, qx, qy, rx, ry):
        return (qx - px) * (ry - py) - (qy - py) * (rx - px)

    d1 = orient(x1, y1, x2, y2, ax, ay)
    d2 = orient(x1, y1, x2, y2, bx, by)
    d3 = orient(ax, ay, bx, by, x1, y1)
    d4 = orient(ax, ay, bx, by, x2, y2)
    return bool(np.any((d1 * d2 < 0) & (d3 * d4 < 0)))
