"""Observation construction: semantic grid, 242-vector and input noise."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit

from ..physics import OMEGA_MAX, V_MAX, V_MIN, Action, WorldState, rows_vertices
from ..physics import kernels as K
from ..scenegen.maps import MapLayout, cell_centers, segment_distance

GRID_SIZE = 48
HISTORY = 5
GOAL_RADIUS = 0.3
RP_SIZE = 6
BV_SIZE = K.MAX_BOXES * 4 * 2
A_SIZE = 2
VECTOR_SIZE = 2 + HISTORY * (RP_SIZE + BV_SIZE + A_SIZE)

FREE, WALL, BOX, ROBOT, GOAL = 0.0, -1.0, 0.5, -0.5, 1.0

# slices into the vector: [G | RP oldest->newest | BV | a]
G_SLICE = slice(0, 2)
RP_SLICE = slice(2, 2 + HISTORY * RP_SIZE)
BV_SLICE = slice(RP_SLICE.stop, RP_SLICE.stop + HISTORY * BV_SIZE)
A_SLICE = slice(BV_SLICE.stop, VECTOR_SIZE)
assert VECTOR_SIZE == 242
_BACTIVE = K.BACTIVE


class ContractViolation(ValueError):
    pass


@dataclass(frozen=True)
class NoiseConfig:
    sigma_vector: float = 0.01
    sigma_grid: float = 0.02
    sigma_action: float = 0.05

    def __post_init__(self):
        for name in ("sigma_vector", "sigma_grid", "sigma_action"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be >= 0, got {v}")

    @classmethod
    def zero(cls) -> "NoiseConfig":
        return cls(0.0, 0.0, 0.0)


@dataclass
class Observation:
    """``vector`` (..., 242) and ``grid`` (..., 48, 48), float32."""

    vector: np.ndarray
    grid: np.ndarray

    def __getitem__(self, idx) -> "Observation":
        return Observation(self.vector[idx], self.grid[idx])


class Normalizer:
    """Room-geometry scaling for positions; fixed bounds for velocities and angles."""

    def __init__(self, layout: MapLayout):
        self.center = layout.center
        self.half = layout.half_size

    def positions(self, xy: np.ndarray) -> np.ndarray:
        return (xy - self.center) / self.half

    def robot_frame(self, rows: np.ndarray) -> np.ndarray:
        """(..., NBF) robot rows -> (..., 6) normalized [x, y, vx, vy, theta, omega]."""
        out = np.empty(rows.shape[:-1] + (RP_SIZE,))
        out[..., 0:2] = self.positions(rows[..., [K.BX, K.BY]])
        out[..., 2] = rows[..., K.BVX] / V_MAX
        out[..., 3] = rows[..., K.BVY] / V_MAX
        out[..., 4] = rows[..., K.BTH] / math.pi
        out[..., 5] = rows[..., K.BW] / OMEGA_MAX
        return np.clip(out, -1.0, 1.0)

    def box_frame(self, box_rows: np.ndarray) -> np.ndarray:
        """(..., 5, NBF) box rows -> (..., 40) normalized vertices, zeros for absent slots."""
        v = np.clip(self.positions(rows_vertices(box_rows)), -1.0, 1.0)
        v = v * (box_rows[..., K.BACTIVE] > 0)[..., None, None]
        return v.reshape(box_rows.shape[:-2] + (BV_SIZE,))


def normalize_action(a: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(a, dtype=float) / np.array([V_MAX, OMEGA_MAX]), -1.0, 1.0)


def build_vector(goal: np.ndarray, robot_history: np.ndarray, box_history: np.ndarray,
                 action_history: np.ndarray) -> np.ndarray:
    """Concatenate already-normalized parts into the 242-vector (batched over leading axes)."""
    robot_history = np.asarray(robot_history, dtype=float)
    box_history = np.asarray(box_history, dtype=float)
    action_history = np.asarray(action_history, dtype=float)
    for name, arr, width in (("robot", robot_history, RP_SIZE), ("box", box_history, BV_SIZE),
                             ("action", action_history, A_SIZE)):
        if arr.shape[-2:] != (HISTORY, width):
            raise ContractViolation(f"{name} history must end in ({HISTORY}, {width}), got {arr.shape}")
    lead = robot_history.shape[:-2]
    parts = [np.asarray(goal, dtype=float).reshape(lead + (2,)),
             robot_history.reshape(lead + (-1,)), box_history.reshape(lead + (-1,)),
             action_history.reshape(lead + (-1,))]
    return np.clip(np.concatenate(parts, axis=-1), -1.0, 1.0)


def static_grid(layout: MapLayout, goal=None, size: int = GRID_SIZE) -> np.ndarray:
    """Wall and goal labels. A wall claims a cell when the capsule reaches within half a cell of its centre."""
    cell = (layout.room_bounds[2] - layout.room_bounds[0]) / size
    xs, ys = cell_centers(layout.room_bounds, cell)
    grid = np.full((size, size), FREE)
    if goal is not None:
        grid[np.hypot(xs - goal[0], ys - goal[1]) <= GOAL_RADIUS] = GOAL
    wall = np.zeros_like(grid, dtype=bool)
    for seg in layout.walls:
        wall |= segment_distance(xs, ys, seg) <= layout.wall_thickness / 2 + cell / 2
    grid[wall] = WALL
    return grid


@njit(cache=True)
def _paint_body(grid, row, x0, y0, cell, label):
    c = math.cos(row[K.BTH])
    s = math.sin(row[K.BTH])
    hx = row[K.BHX]
    hy = row[K.BHY]
    ex = abs(c) * hx + abs(s) * hy
    ey = abs(s) * hx + abs(c) * hy
    n = grid.shape[0]
    i0 = max(0, int(math.floor((row[K.BY] - ey - y0) / cell - 0.5)))
    i1 = min(n - 1, int(math.ceil((row[K.BY] + ey - y0) / cell - 0.5)))
    j0 = max(0, int(math.floor((row[K.BX] - ex - x0) / cell - 0.5)))
    j1 = min(grid.shape[1] - 1, int(math.ceil((row[K.BX] + ex - x0) / cell - 0.5)))
    for i in range(i0, i1 + 1):
        py = y0 + (i + 0.5) * cell - row[K.BY]
        for j in range(j0, j1 + 1):
            px = x0 + (j + 0.5) * cell - row[K.BX]
            qx = c * px + s * py
            qy = -s * px + c * py
            if abs(qx) <= hx and abs(qy) <= hy:
                grid[i, j] = label


@njit(cache=True)
def paint_bodies(out, static, bodies, x0, y0, cell):
    """out[e] = static[e] with boxes then robot painted on top; bodies (E, 6, NBF)."""
    for e in range(bodies.shape[0]):
        out[e] = static[e]
        for b in range(1, bodies.shape[1]):
            if bodies[e, b, _BACTIVE] > 0.0:
                _paint_body(out[e], bodies[e, b], x0, y0, cell, 0.5)
        _paint_body(out[e], bodies[e, 0], x0, y0, cell, -0.5)



def rasterize_grid(world: WorldState, goal, layout: MapLayout) -> np.ndarray:
    """48x48 label-value grid; priority robot > box > wall > goal > free; row 0 is the lowest y."""
    out = np.empty((1, GRID_SIZE, GRID_SIZE))
    cell = (layout.room_bounds[2] - layout.room_bounds[0]) / GRID_SIZE
    paint_bodies(out, static_grid(layout, goal)[None], world.bodies[None], layout.room_bounds[0],
                 layout.room_bounds[1], cell)
    return out[0]


def box_noise_mask(box_present: np.ndarray) -> np.ndarray:
    """(..., 5) presence -> (..., 242) mask that keeps absent-box vertex entries exactly zero."""
    box_present = np.asarray(box_present, dtype=bool)
    mask = np.ones(box_present.shape[:-1] + (VECTOR_SIZE,))
    per_slot = np.repeat(box_present.astype(float), 8, axis=-1)
    mask[..., BV_SLICE] = np.tile(per_slot, HISTORY)
    return mask


def apply_noise(x: Union[Observation, Action, np.ndarray], cfg: NoiseConfig, rng: np.random.Generator,
                box_present=None):
    """Independent Gaussian noise on vector, grid and action, re-clamped to valid ranges.

    Arrays are treated as raw actions ``(..., 2)`` in physical units.
    """
    if isinstance(x, Observation):
        vec, grid = x.vector, x.grid
        if cfg.sigma_vector > 0:
            noise = rng.normal(0.0, cfg.sigma_vector, vec.shape)
            if box_present is not None:
                noise *= box_noise_mask(box_present)
            vec = np.clip(vec + noise, -1.0, 1.0)
        if cfg.sigma_grid > 0:
            grid = np.clip(grid + rng.normal(0.0, cfg.sigma_grid, grid.shape), -1.0, 1.0)
        return Observation(vec.astype(x.vector.dtype), grid.astype(x.grid.dtype))
    if isinstance(x, Action):
        a = apply_noise(np.array([x.v_x, x.theta_dot_z]), cfg, rng)
        return Action(float(a[0]), float(a[1]))
    a = np.asarray(x, dtype=float)
    if cfg.sigma_action > 0:
        a = a + rng.normal(0.0, cfg.sigma_action, a.shape) * np.array([V_MAX, OMEGA_MAX])
    return clip_action(a)


def clip_action(a: np.ndarray) -> np.ndarray:
    return np.stack([np.clip(a[..., 0], V_MIN, V_MAX), np.clip(a[..., 1], -OMEGA_MAX, OMEGA_MAX)], axis=-1)
