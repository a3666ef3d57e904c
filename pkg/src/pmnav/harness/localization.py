"""Localization trials under three landmark-density regimes.

Every regime is the same 60 m straight corridor with the robot starting at
x = 4 facing east; only the sign layout differs:

- redundant: a sign every 4 m, so several are in view at once
- minimal: exactly two signs near the start, the rest far away
- scarce: one sign near the start, the second only in view after walking
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nav_agent import EpisodeConfig, LocalizationFailed, localize
from ..perception import NoiseModel, SimulatedPerception
from ..priori_map import PrioriMapSpec, SemanticPrioriMap, spec_from_dict, segment_path
from ..world_sim import Pose, World, build_world
from .metrics import Outcome

REGIMES = ("redundant", "minimal", "scarce")
CORRIDOR_LENGTH = 60.0
START = Pose(4.0, 0.0, 0.0)

_DOORS = {
    "redundant": [8 + 4 * i for i in range(13)],
    "minimal": [9, 13, 45, 53],
    "scarce": [10, 26, 44],
}


def regime_spec(regime: str) -> PrioriMapSpec:
    if regime not in _DOORS:
        raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    rooms = []
    for i, x in enumerate(_DOORS[regime]):
        side = 1 if i % 2 == 0 else -1
        rooms.append({"id": f"room{i + 1}", "center": [x, 3.5 * side], "door": [x, 1.5 * side], "label": f"Room {i + 1}"})
    return spec_from_dict(
        {
            "meta": {"name": f"corridor-{regime}", "north": [0, 1]},
            "rooms": rooms,
            "waypoints": [
                {"id": "start", "kind": "start", "pos": [0, 0]},
                {"id": "end", "kind": "end", "pos": [CORRIDOR_LENGTH, 0]},
            ],
            "path_edges": [["start", "end"]],
        }
    )


@dataclass(frozen=True)
class RegimeScene:
    regime: str
    world: World
    map: SemanticPrioriMap


def regime_scene(regime: str) -> RegimeScene:
    spec = regime_spec(regime)
    return RegimeScene(regime, build_world(spec), segment_path(spec))


def localization_trial(scene: RegimeScene, noise: NoiseModel, seed: int, budget: int = 10) -> Outcome:
    """One localization run; success means two distinct signs within the panorama budget.

    The detection count is the number of panoramas taken.
    """
    perception = SimulatedPerception(noise, rng=np.random.default_rng([noise.seed, seed]))
    config = EpisodeConfig(noise=noise, localization_budget=budget)
    try:
        _, _, attempts, _ = localize(scene.map, scene.world, START, perception, config)
    except LocalizationFailed as exc:
        return Outcome(0, exc.detections_made)
    return Outcome(1, attempts)


def run_regimes(trials: int = 100, false_negative_rate: float = 0.3, seed: int = 0, budget: int = 10) -> dict[str, list[Outcome]]:
    noise = NoiseModel(false_negative_rate=false_negative_rate, seed=seed)
    out = {}
    for regime in REGIMES:
        scene = regime_scene(regime)
        out[regime] = [localization_trial(scene, noise, i, budget) for i in range(trials)]
    return out
