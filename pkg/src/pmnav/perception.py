"""Simulated perception: views, sign detections, floor goals and the two
direction roles (30-degree coarse guess, pixel-exact refinement).

The simulated stack reads ground truth from the world and projects it
through a pinhole camera, so that the pixel-level refinement is an exact
inverse of the projection.  A ``NoiseModel`` drops detections and jitters
their bearings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .geometry import Point, dist, heading_of, project_onto_segment, wrap_deg
from .world_sim import Pose, World, visible_in_views

LOCALIZATION_VIEWS = (30.0, 90.0, 150.0, 210.0, 270.0, 330.0)
RAY_OFFSETS = tuple(-10.0 + 2.5 * i for i in range(9))
COARSE_STEP = 30.0
SIGN_WIDTH = 0.6


@dataclass(frozen=True)
class NoiseModel:
    false_negative_rate: float = 0.0
    bearing_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.false_negative_rate <= 1.0:
            raise ValueError("false_negative_rate must be in [0, 1]")
        if self.bearing_noise_sigma < 0:
            raise ValueError("bearing_noise_sigma must be nonnegative")


@dataclass(frozen=True)
class Detection:
    label: str
    pixel_center: float
    bearing: float
    distance: float
    mask_area_fraction: float


@dataclass(frozen=True)
class ViewModel:
    view_angle: float
    image_width: int = 640
    fov: float = 60.0
    detections: tuple[Detection, ...] = ()
    forward_ray_profile: tuple[tuple[float, float], ...] = ()

    @property
    def focal(self) -> float:
        return focal_length(self.image_width, self.fov)

    def find(self, label: str) -> Detection | None:
        for d in self.detections:
            if d.label == label:
                return d
        return None

    def to_dict(self) -> dict:
        return {
            "view_angle": self.view_angle,
            "detections": [
                {"label": d.label, "pixel": round(d.pixel_center, 3), "bearing": round(d.bearing, 4), "distance": round(d.distance, 4)}
                for d in self.detections
            ],
        }


@dataclass(frozen=True)
class PanoramaModel:
    views: tuple[ViewModel, ...]

    @property
    def angles(self) -> tuple[float, ...]:
        return tuple(v.view_angle for v in self.views)

    @property
    def labels(self) -> list[str]:
        """Distinct detected labels, nearest first."""
        best: dict[str, float] = {}
        for v in self.views:
            for d in v.detections:
                best[d.label] = min(best.get(d.label, math.inf), d.distance)
        return sorted(best, key=lambda k: (best[k], k))

    def view(self, angle: float) -> ViewModel | None:
        for v in self.views:
            if abs(wrap_deg(v.view_angle - angle)) < 1e-9:
                return v
        return None


@dataclass(frozen=True)
class FloorGoal:
    """A point on a corridor centreline ahead of the robot (the pixel-goal target)."""

    bearing: float  # relative to robot heading, positive = left
    distance: float
    corridor: int
    toward: Point
    axis_bearing: float = 0.0  # direction the corridor runs, relative to heading


def focal_length(image_width: int, fov: float) -> float:
    return (image_width / 2) / math.tan(math.radians(fov / 2))


def pixel_for_bearing(bearing: float, image_width: int = 640, fov: float = 60.0) -> float:
    return image_width / 2 + focal_length(image_width, fov) * math.tan(math.radians(bearing))


def quantize_direction(angle: float, step: float = COARSE_STEP) -> float:
    """Nearest multiple of ``step``; ties go toward 0, then clockwise."""
    a = wrap_deg(angle)
    lo = math.floor(a / step) * step
    hi = lo + step
    dl, dh = a - lo, hi - a
    if abs(dl - dh) <= 1e-9:
        if abs(lo) != abs(hi):
            pick = lo if abs(lo) < abs(hi) else hi
        else:
            pick = min(lo, hi)
    else:
        pick = lo if dl < dh else hi
    return wrap_deg(pick) if abs(pick) != 180.0 else 180.0


class Perception(Protocol):
    image_width: int

    def capture(self, world: World, pose: Pose, view_angle: float) -> ViewModel: ...

    def capture_panorama(self, world: World, pose: Pose, angle_set: Sequence[float]) -> PanoramaModel: ...

    def floor_goals(self, world: World, pose: Pose, lookahead: float = 3.0) -> list[FloorGoal]: ...


@dataclass
class SimulatedPerception:
    """Ground-truth perception with optional detection noise.

    The random stream belongs to one episode; construct a new instance per
    episode for reproducible runs.
    """

    noise: NoiseModel = field(default_factory=NoiseModel)
    image_width: int = 640
    rng: np.random.Generator | None = None
    captures: int = 0

    def __post_init__(self) -> None:
        if self.rng is None:
            self.rng = np.random.default_rng(self.noise.seed)

    def capture(self, world: World, pose: Pose, view_angle: float) -> ViewModel:
        return self.capture_panorama(world, pose, [view_angle]).views[0]

    def capture_panorama(self, world: World, pose: Pose, angle_set: Sequence[float]) -> PanoramaModel:
        if len(angle_set) == 0:
            raise ValueError("angle_set must not be empty")
        fov = world.motion.fov
        visible = visible_in_views(world, pose, angle_set)
        views = []
        for angle in angle_set:
            self.captures += 1
            dets = []
            for v in visible[angle]:
                if self.noise.false_negative_rate > 0 and self.rng.random() < self.noise.false_negative_rate:
                    continue
                bearing = v.bearing
                if self.noise.bearing_noise_sigma > 0:
                    bearing += float(self.rng.normal(0.0, self.noise.bearing_noise_sigma))
                bearing = max(-fov / 2, min(fov / 2, bearing))
                pixel = min(pixel_for_bearing(bearing, self.image_width, fov), self.image_width - 1e-6)
                focal = focal_length(self.image_width, fov)
                area = min(1.0, SIGN_WIDTH * focal / max(v.distance, 1e-6) / self.image_width)
                dets.append(Detection(v.room_id, pixel, bearing, v.distance, area))
            offsets = [angle + o for o in RAY_OFFSETS]
            rays = world.wall_distances(pose.xy, [pose.heading + o for o in offsets])
            profile = tuple((o, float(d)) for o, d in zip(RAY_OFFSETS, rays))
            views.append(ViewModel(angle, self.image_width, fov, tuple(dets), profile))
        return PanoramaModel(tuple(views))

    def floor_goals(self, world: World, pose: Pose, lookahead: float = 3.0) -> list[FloorGoal]:
        """Centreline points ``lookahead`` ahead along each corridor the robot stands in."""
        goals = []
        for i in world.corridors_at(pose.xy):
            c = world.corridors[i]
            q, t, _ = project_onto_segment(pose.xy, c.a, c.b)
            length = c.length
            ux, uy = (c.b[0] - c.a[0]) / length, (c.b[1] - c.a[1]) / length
            for sign, end in ((1, c.b), (-1, c.a)):
                remaining = length - t if sign > 0 else t
                s = t + sign * min(lookahead, remaining)
                target = (c.a[0] + ux * s, c.a[1] + uy * s)
                d = dist(pose.xy, target)
                if remaining < 0.5 or d < 0.5:
                    continue
                rel = wrap_deg(heading_of((target[0] - pose.x, target[1] - pose.y)) - pose.heading)
                axis = wrap_deg(heading_of((sign * ux, sign * uy)) - pose.heading)
                goals.append(FloorGoal(rel, d, i, end, axis))
        goals.sort(key=lambda g: (round(g.bearing, 9), g.corridor))
        return goals


def coarse_direction(panorama: PanoramaModel, target_label: str) -> float | None:
    """Direction of a detected label on the 30-degree grid, or None if unseen."""
    found = locate_detection(panorama, target_label)
    if found is None:
        return None
    v, d = found
    return quantize_direction(v.view_angle + d.bearing)


def refine_heading(view: ViewModel, pixel_center: float) -> float:
    """Invert the pinhole projection: pixel column to direction relative to heading."""
    if not 0.0 <= pixel_center < view.image_width:
        raise ValueError(f"pixel {pixel_center} outside image of width {view.image_width}")
    return view.view_angle + math.degrees(math.atan((pixel_center - view.image_width / 2) / view.focal))


def wall_floor_ratio(view: ViewModel, near_distance: float = 2.5) -> float:
    """Share of forward rays hitting a wall within ``near_distance``."""
    if not view.forward_ray_profile:
        raise ValueError("view has no forward ray profile")
    near = sum(1 for _, d in view.forward_ray_profile if d <= near_distance)
    return near / len(view.forward_ray_profile)


def locate_detection(panorama: PanoramaModel, label: str) -> tuple[ViewModel, Detection] | None:
    """Most central detection of ``label`` across the panorama."""
    best = None
    for v in panorama.views:
        d = v.find(label)
        if d is not None and (best is None or abs(d.bearing) < abs(best[1].bearing)):
            best = (v, d)
    return best
