"""Random scene placement: boxes, robot and goal for one episode."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from ..physics import WorldState, make_box, make_robot
from ..physics import kernels as K
from .maps import MAX_WALLS, MapLayout

ABSENT, RANDOM, CHALLENGING = 0, 1, 2
DEFAULT_P = (0.2, 0.3, 0.4, 0.5, 0.6)
BOX_ATTEMPTS = 50
ROBOT_ATTEMPTS = 200
CLEARANCE = 0.02
ROTATION_PERTURBATION = math.radians(30.0)
GOAL_WALL_CLEARANCE = 0.05


class SceneGenerationError(RuntimeError):
    """No valid robot pose was found; retry with another seed."""


@dataclass(frozen=True)
class SpawnConfig:
    lam: float = 0.2
    p: Tuple[float, ...] = DEFAULT_P
    max_boxes: int = K.MAX_BOXES
    robot_anywhere_prob: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError(f"lambda={self.lam} outside [0, 1]")
        if not (0 <= self.max_boxes <= K.MAX_BOXES):
            raise ValueError(f"max_boxes must be in [0, {K.MAX_BOXES}]")
        if len(self.p) != self.max_boxes:
            raise ValueError(f"need {self.max_boxes} spawn probabilities, got {len(self.p)}")
        if any(not 0.2 <= v <= 0.6 for v in self.p):
            raise ValueError(f"each p_i must lie in [0.2, 0.6], got {self.p}")
        if not 0.0 <= self.robot_anywhere_prob <= 1.0:
            raise ValueError("robot_anywhere_prob outside [0, 1]")

    def with_lambda(self, lam: float) -> "SpawnConfig":
        return SpawnConfig(lam, self.p, self.max_boxes, self.robot_anywhere_prob)


@dataclass
class Scene:
    map: MapLayout
    world: WorldState
    goal: np.ndarray
    box_present: np.ndarray
    # mode drawn for each slot before any rejection (ABSENT / RANDOM / CHALLENGING)
    slot_modes: np.ndarray = field(default_factory=lambda: np.zeros(K.MAX_BOXES, dtype=np.int8))

    @property
    def n_boxes(self) -> int:
        return int(self.box_present.sum())


def _uniform_in(rng: np.random.Generator, rect) -> Tuple[float, float]:
    return float(rng.uniform(rect[0], rect[2])), float(rng.uniform(rect[1], rect[3]))


def _is_clear(bodies: np.ndarray, walls: np.ndarray, cont: np.ndarray, clearance: float = CLEARANCE) -> bool:
    return K.detect_contacts(bodies, walls, clearance, cont) == 0


def _goal_ok(layout: MapLayout, gx: float, gy: float) -> bool:
    for x1, y1, x2, y2 in layout.walls:
        qx, qy = K.point_segment_closest(gx, gy, x1, y1, x2, y2)
        if math.hypot(gx - qx, gy - qy) <= layout.wall_thickness / 2 + GOAL_WALL_CLEARANCE:
            return False
    return True


def draw_slot_modes(cfg: SpawnConfig, rng: np.random.Generator) -> np.ndarray:
    """Three-way split per slot: random w.p. lambda*p_i, challenging w.p. lambda*(1-p_i), else absent."""
    u = rng.random(cfg.max_boxes)
    p = np.asarray(cfg.p)
    modes = np.full(cfg.max_boxes, ABSENT, dtype=np.int8)
    modes[u < cfg.lam] = CHALLENGING
    modes[u < cfg.lam * p] = RANDOM
    return modes


def generate_scene(layout: MapLayout, cfg: SpawnConfig, rng: np.random.Generator,
                   wall_capacity: int = MAX_WALLS) -> Scene:
    """Pure function of (layout, cfg, rng state)."""
    walls = layout.walls_array(wall_capacity)
    bodies = np.zeros((K.N_BODIES, K.NBF))
    cont = np.zeros((K.MAX_CONTACTS, K.NCF))
    x0, y0, x1, y1 = layout.room_bounds

    # robot first: it only has to clear the walls
    anywhere = rng.random() < cfg.robot_anywhere_prob
    for _ in range(ROBOT_ATTEMPTS):
        x, y = _uniform_in(rng, layout.room_bounds if anywhere else layout.robot_spawn_region)
        th = float(rng.uniform(-math.pi, math.pi))
        bodies[0] = make_robot(x, y, th).to_row()
        if _is_clear(bodies, walls, cont):
            break
    else:
        raise SceneGenerationError(f"map {layout.id}: no collision-free robot pose in {ROBOT_ATTEMPTS} attempts")

    for _ in range(ROBOT_ATTEMPTS):
        gx, gy = _uniform_in(rng, layout.goal_spawn_region)
        if _goal_ok(layout, gx, gy):
            break
    else:
        raise SceneGenerationError(f"map {layout.id}: goal region is covered by walls")

    modes = draw_slot_modes(cfg, rng)
    poses = layout.challenging_poses
    for i in range(cfg.max_boxes):
        if modes[i] == ABSENT:
            continue
        for _ in range(BOX_ATTEMPTS):
            if modes[i] == CHALLENGING and poses:
                pose, radius = poses[i % len(poses)]
                rho = radius * math.sqrt(rng.random())
                phi = rng.uniform(-math.pi, math.pi)
                bx, by = pose.x + rho * math.cos(phi), pose.y + rho * math.sin(phi)
                bth = pose.theta + rng.uniform(-ROTATION_PERTURBATION, ROTATION_PERTURBATION)
            else:
                bx, by = float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1))
                bth = float(rng.uniform(-math.pi, math.pi))
            bodies[1 + i] = make_box(bx, by, bth).to_row()
            if _is_clear(bodies, walls, cont):
                break
            bodies[1 + i] = 0.0
        # slot stays absent after BOX_ATTEMPTS failures

    world = WorldState(bodies, walls, 0.0)
    return Scene(layout, world, np.array([gx, gy]), world.box_present.copy(), modes)


def scene_rng(seed: int | Sequence[int]) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))
