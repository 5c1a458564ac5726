"""Typed view over the packed physics arrays."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import kernels as K

DT = 1.0 / 60.0
SUBSTEPS_PER_ACTION = 20

ROBOT_HALF_EXTENTS = (0.35, 0.2)
ROBOT_MASS = 30.0
BOX_HALF_EXTENTS = (0.3, 0.3)
BOX_MASS = 5.0
BOX_FLOOR_FRICTION = 0.35
WALL_THICKNESS = 0.1

V_MIN, V_MAX = -0.5, 1.0
OMEGA_MAX = 1.5


class InvalidActionError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicsParams:
    dt: float = DT
    max_accel: float = 2.0
    max_alpha: float = 6.0
    lateral_grip: float = 8.0
    gravity: float = 9.81
    contact_friction: float = 0.3
    slop: float = 0.003
    baumgarte: float = 0.8
    max_correction: float = 0.05
    margin: float = 0.02
    velocity_iterations: int = 12
    position_iterations: int = 12
    touch_tolerance: float = 1e-3

    def as_array(self, dt: Optional[float] = None) -> np.ndarray:
        prm = np.zeros(K.NPARAM)
        prm[K.P_DT] = self.dt if dt is None else dt
        prm[K.P_ACCEL] = self.max_accel
        prm[K.P_ALPHA] = self.max_alpha
        prm[K.P_GRIP] = self.lateral_grip
        prm[K.P_GRAVITY] = self.gravity
        prm[K.P_MU_CONTACT] = self.contact_friction
        prm[K.P_SLOP] = self.slop
        prm[K.P_BETA] = self.baumgarte
        prm[K.P_MAX_CORRECTION] = self.max_correction
        prm[K.P_MARGIN] = self.margin
        prm[K.P_VEL_ITERS] = self.velocity_iterations
        prm[K.P_POS_ITERS] = self.position_iterations
        prm[K.P_TOUCH] = self.touch_tolerance
        return prm


DEFAULT_PARAMS = PhysicsParams()


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError(f"non-finite pose {self}")
        object.__setattr__(self, "theta", float(K.wrap_angle(float(self.theta))))


@dataclass(frozen=True)
class Action:
    """Unicycle command: forward speed (m/s) and yaw rate (rad/s)."""

    v_x: float
    theta_dot_z: float

    def validate(self, v_min=V_MIN, v_max=V_MAX, omega_max=OMEGA_MAX) -> "Action":
        if not (math.isfinite(self.v_x) and math.isfinite(self.theta_dot_z)):
            raise InvalidActionError(f"non-finite action {self}")
        if not (v_min - 1e-12 <= self.v_x <= v_max + 1e-12):
            raise InvalidActionError(f"v_x={self.v_x} outside [{v_min}, {v_max}]")
        if abs(self.theta_dot_z) > omega_max + 1e-12:
            raise InvalidActionError(f"theta_dot_z={self.theta_dot_z} outside +-{omega_max}")
        return self

    @classmethod
    def clipped(cls, v_x, theta_dot_z) -> "Action":
        return cls(float(np.clip(v_x, V_MIN, V_MAX)), float(np.clip(theta_dot_z, -OMEGA_MAX, OMEGA_MAX)))


@dataclass
class RigidBody2D:
    pose: Pose2D
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    angular_velocity: float = 0.0
    half_extents: np.ndarray = field(default_factory=lambda: np.array(BOX_HALF_EXTENTS))
    mass: float = BOX_MASS
    inertia: Optional[float] = None
    movable: bool = True
    floor_friction: float = 0.0

    def __post_init__(self):
        self.linear_velocity = np.asarray(self.linear_velocity, dtype=float).reshape(2)
        self.half_extents = np.asarray(self.half_extents, dtype=float).reshape(2)
        if np.any(self.half_extents <= 0):
            raise ValueError("half_extents must be positive")
        if self.inertia is None:
            hx, hy = self.half_extents
            self.inertia = self.mass * ((2 * hx) ** 2 + (2 * hy) ** 2) / 12.0
        if self.movable and (self.mass <= 0 or self.inertia <= 0):
            raise ValueError("movable bodies need positive mass and inertia")

    def to_row(self) -> np.ndarray:
        row = np.zeros(K.NBF)
        row[K.BX], row[K.BY], row[K.BTH] = self.pose.x, self.pose.y, self.pose.theta
        row[K.BVX], row[K.BVY] = self.linear_velocity
        row[K.BW] = self.angular_velocity
        row[K.BHX], row[K.BHY] = self.half_extents
        row[K.BMASS] = self.mass
        row[K.BINERTIA] = self.inertia
        if self.movable:
            row[K.BINVM] = 1.0 / self.mass
            row[K.BINVI] = 1.0 / self.inertia
        row[K.BACTIVE] = 1.0
        row[K.BMU] = self.floor_friction
        return row

    @classmethod
    def from_row(cls, row: np.ndarray) -> "RigidBody2D":
        return cls(
            pose=Pose2D(float(row[K.BX]), float(row[K.BY]), float(row[K.BTH])),
            linear_velocity=row[[K.BVX, K.BVY]].copy(),
            angular_velocity=float(row[K.BW]),
            half_extents=row[[K.BHX, K.BHY]].copy(),
            mass=float(row[K.BMASS]),
            inertia=float(row[K.BINERTIA]),
            movable=bool(row[K.BINVM] > 0),
            floor_friction=float(row[K.BMU]),
        )


def make_robot(x=0.0, y=0.0, theta=0.0, speed=0.0, omega=0.0) -> RigidBody2D:
    v = speed * np.array([math.cos(theta), math.sin(theta)])
    return RigidBody2D(Pose2D(x, y, theta), v, omega, np.array(ROBOT_HALF_EXTENTS), ROBOT_MASS)


def make_box(x=0.0, y=0.0, theta=0.0) -> RigidBody2D:
    return RigidBody2D(Pose2D(x, y, theta), half_extents=np.array(BOX_HALF_EXTENTS), mass=BOX_MASS,
                       floor_friction=BOX_FLOOR_FRICTION)


def walls_array(segments: Sequence[Sequence[float]], thickness: float = WALL_THICKNESS,
                capacity: Optional[int] = None) -> np.ndarray:
    """Pack ``[x1, y1, x2, y2]`` segments into the kernel wall layout."""
    n = len(segments)
    cap = n if capacity is None else capacity
    if cap < n:
        raise ValueError(f"wall capacity {cap} < {n} segments")
    out = np.zeros((cap, K.NWF))
    for i, seg in enumerate(segments):
        out[i, :4] = seg
        out[i, K.WR] = thickness / 2.0
        out[i, K.WACTIVE] = 1.0
    return out


@dataclass(frozen=True)
class ContactReport:
    robot_wall_contact: bool
    robot_box_contacts: frozenset
    box_wall_contacts: frozenset
    max_penetration: float

    @classmethod
    def from_array(cls, rep: np.ndarray) -> "ContactReport":
        boxes = rep[K.R_ROBOT_BOX:K.R_ROBOT_BOX + K.MAX_BOXES]
        walls = rep[K.R_BOX_WALL:K.R_BOX_WALL + K.MAX_BOXES]
        return cls(
            robot_wall_contact=bool(rep[K.R_ROBOT_WALL] > 0),
            robot_box_contacts=frozenset(int(i) for i in np.flatnonzero(boxes)),
            box_wall_contacts=frozenset(int(i) for i in np.flatnonzero(walls)),
            max_penetration=float(rep[K.R_PENETRATION]),
        )


@dataclass
class WorldState:
    """Robot in row 0 of ``bodies``, box slots in rows 1..5 (inactive rows are absent boxes)."""

    bodies: np.ndarray
    walls: np.ndarray
    time: float = 0.0

    @classmethod
    def build(cls, robot: RigidBody2D, boxes: Sequence[Optional[RigidBody2D]] = (),
              walls: Sequence[Sequence[float]] | np.ndarray = (), time: float = 0.0) -> "WorldState":
        if len(boxes) > K.MAX_BOXES:
            raise ValueError(f"at most {K.MAX_BOXES} boxes")
        bodies = np.zeros((K.N_BODIES, K.NBF))
        bodies[0] = robot.to_row()
        for i, box in enumerate(boxes):
            if box is not None:
                bodies[1 + i] = box.to_row()
        w = walls if isinstance(walls, np.ndarray) else walls_array(walls)
        if len(w) == 0:
            w = np.zeros((1, K.NWF))
        return cls(bodies, w, time)

    @property
    def robot(self) -> RigidBody2D:
        return RigidBody2D.from_row(self.bodies[0])

    @property
    def boxes(self) -> List[Optional[RigidBody2D]]:
        return [RigidBody2D.from_row(r) if r[K.BACTIVE] else None for r in self.bodies[1:]]

    @property
    def box_present(self) -> np.ndarray:
        return self.bodies[1:, K.BACTIVE] > 0

    def copy(self) -> "WorldState":
        return WorldState(self.bodies.copy(), self.walls.copy(), self.time)

    def box_kinetic_energy(self) -> float:
        b = self.bodies[1:]
        act = b[:, K.BACTIVE] > 0
        ke = 0.5 * b[:, K.BMASS] * (b[:, K.BVX] ** 2 + b[:, K.BVY] ** 2) + 0.5 * b[:, K.BINERTIA] * b[:, K.BW] ** 2
        return float(np.sum(ke[act]))


def body_vertices(body: RigidBody2D) -> np.ndarray:
    """Corners (4, 2), counter-clockwise from the body-frame (+x, +y) corner."""
    out = np.empty((4, 2))
    K.rect_vertices(body.pose.x, body.pose.y, body.pose.theta, body.half_extents[0], body.half_extents[1], out)
    return out


def rows_vertices(bodies: np.ndarray) -> np.ndarray:
    """Vectorised corners for an ``(..., NBF)`` array -> ``(..., 4, 2)``."""
    c = np.cos(bodies[..., K.BTH])[..., None]
    s = np.sin(bodies[..., K.BTH])[..., None]
    hx = bodies[..., K.BHX][..., None]
    hy = bodies[..., K.BHY][..., None]
    lx = hx * np.array([1.0, -1.0, -1.0, 1.0])
    ly = hy * np.array([1.0, 1.0, -1.0, -1.0])
    x = bodies[..., K.BX][..., None] + c * lx - s * ly
    y = bodies[..., K.BY][..., None] + s * lx + c * ly
    return np.stack([x, y], axis=-1)


def _check_action(action: Action) -> Action:
    return action.validate()


def integrate_unicycle(robot: RigidBody2D, action: Action, dt: float,
                       params: PhysicsParams = DEFAULT_PARAMS) -> RigidBody2D:
    """Free-space unicycle step with acceleration-limited velocity tracking."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    _check_action(action)
    rows = robot.to_row()[None, :].copy()
    K.drive_robot(rows, action.v_x, action.theta_dot_z, params.as_array(dt))
    K.integrate_positions(rows, dt)
    return RigidBody2D.from_row(rows[0])


def step_world(world: WorldState, action: Action, dt: float = DT,
               params: PhysicsParams = DEFAULT_PARAMS) -> Tuple[WorldState, ContactReport]:
    if not dt > 0:
        raise ValueError("dt must be positive")
    _check_action(action)
    out = world.copy()
    rep = np.zeros(K.NREPORT)
    K.step_world_kernel(out.bodies, out.walls, action.v_x, action.theta_dot_z, 1, params.as_array(dt),
                        0.0, 0.0, rep)
    out.time = world.time + dt
    return out, ContactReport.from_array(rep)


def replace_pose(body: RigidBody2D, **kw) -> RigidBody2D:
    return replace(body, pose=replace(body.pose, **kw))
