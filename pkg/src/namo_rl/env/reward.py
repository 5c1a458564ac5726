"""Per-step reward terms, each already multiplied by its weight."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..physics import DT, OMEGA_MAX, SUBSTEPS_PER_ACTION, V_MAX, Action, ContactReport, WorldState
from ..physics import kernels as K

TERMS = ("goal", "progress", "dist", "wall_collision", "box_collision", "vel_effort", "rot_effort",
         "vel_offset", "rot_offset", "time")
WEIGHTS = {
    "goal": 10.0, "progress": 1.0, "dist": 0.1, "wall_collision": 0.2, "box_collision": 0.1,
    "vel_effort": 0.05, "rot_effort": 0.1, "vel_offset": 0.2, "rot_offset": 0.1, "time": 1.0,
}
POLICY_DT = DT * SUBSTEPS_PER_ACTION
DEFAULT_DIAGONAL = 6.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class RewardBreakdown:
    goal: float
    progress: float
    dist: float
    wall_collision: float
    box_collision: float
    vel_effort: float
    rot_effort: float
    vel_offset: float
    rot_offset: float
    time: float

    @property
    def total(self) -> float:
        return float(sum(getattr(self, t) for t in TERMS))

    def as_dict(self) -> Dict[str, float]:
        d = {t: getattr(self, t) for t in TERMS}
        d["total"] = self.total
        return d

    @classmethod
    def from_row(cls, row: np.ndarray) -> "RewardBreakdown":
        return cls(*(float(v) for v in row[:len(TERMS)]))


def reward_terms(prev_xy: np.ndarray, next_xy: np.ndarray, forward_speed: np.ndarray, omega: np.ndarray,
                 target: np.ndarray, wall_contact: np.ndarray, box_contact: np.ndarray, goal: np.ndarray,
                 success: np.ndarray, diagonal: float = DEFAULT_DIAGONAL, step_time: float = POLICY_DT) -> np.ndarray:
    """Batched weighted terms, shape (E, len(TERMS)), columns in TERMS order.

    Progress uses the mean velocity over the policy step projected on the
    direction to the goal from the starting position.
    """
    out = np.zeros((len(prev_xy), len(TERMS)))
    to_goal = goal - prev_xy
    dist0 = np.linalg.norm(to_goal, axis=-1)
    ghat = np.divide(to_goal, dist0[:, None], out=np.zeros_like(to_goal), where=dist0[:, None] > 0)
    v_mean = (next_xy - prev_xy) / step_time
    d1 = np.linalg.norm(goal - next_xy, axis=-1)

    out[:, 0] = np.where(success, WEIGHTS["goal"], 0.0)
    out[:, 1] = np.clip(np.sum(v_mean * ghat, axis=-1) / V_MAX, -1.0, 1.0) * WEIGHTS["progress"]
    out[:, 2] = np.clip(1.0 - d1 / diagonal, 0.0, 1.0) * WEIGHTS["dist"]
    out[:, 3] = -np.asarray(wall_contact, dtype=float) * WEIGHTS["wall_collision"]
    out[:, 4] = -np.asarray(box_contact, dtype=float) * WEIGHTS["box_collision"]
    out[:, 5] = -np.minimum(np.abs(target[:, 0]) / V_MAX, 1.0) * WEIGHTS["vel_effort"]
    out[:, 6] = -np.minimum(np.abs(target[:, 1]) / OMEGA_MAX, 1.0) * WEIGHTS["rot_effort"]
    out[:, 7] = -np.minimum(np.abs(forward_speed - target[:, 0]) / V_MAX, 1.0) * WEIGHTS["vel_offset"]
    out[:, 8] = -np.minimum(np.abs(omega - target[:, 1]) / OMEGA_MAX, 1.0) * WEIGHTS["rot_offset"]
    out[:, 9] = -WEIGHTS["time"]
    return out


def forward_speed(rows: np.ndarray) -> np.ndarray:
    return np.cos(rows[..., K.BTH]) * rows[..., K.BVX] + np.sin(rows[..., K.BTH]) * rows[..., K.BVY]


def compute_reward(prev: WorldState, next: WorldState, action: Action, contacts: ContactReport, goal,
                   success: Optional[bool] = None, diagonal: float = DEFAULT_DIAGONAL,
                   goal_radius: float = 0.3) -> RewardBreakdown:
    """Single-transition reward. ``success`` defaults to the end pose lying within the goal radius."""
    goal = np.asarray(goal, dtype=float)
    r0, r1 = prev.bodies[0], next.bodies[0]
    if success is None:
        success = bool(np.hypot(*(r1[[K.BX, K.BY]] - goal)) <= goal_radius)
    row = reward_terms(
        r0[None, [K.BX, K.BY]], r1[None, [K.BX, K.BY]], forward_speed(r1)[None], np.array([r1[K.BW]]),
        np.array([[action.v_x, action.theta_dot_z]]), np.array([contacts.robot_wall_contact]),
        np.array([bool(contacts.robot_box_contacts)]), goal[None], np.array([success]), diagonal,
        next.time - prev.time if next.time > prev.time else POLICY_DT,
    )
    return RewardBreakdown.from_row(row[0])
