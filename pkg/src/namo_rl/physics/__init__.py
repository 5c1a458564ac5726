"""Deterministic 2D rigid-body simulation of a pushing robot, boxes and walls."""
from .world import (
    BOX_FLOOR_FRICTION, BOX_HALF_EXTENTS, BOX_MASS, DEFAULT_PARAMS, DT, OMEGA_MAX, ROBOT_HALF_EXTENTS,
    ROBOT_MASS, SUBSTEPS_PER_ACTION, V_MAX, V_MIN, WALL_THICKNESS, Action, ContactReport,
    InvalidActionError, PhysicsParams, Pose2D, RigidBody2D, WorldState, body_vertices,
    integrate_unicycle, make_box, make_robot, rows_vertices, step_world, walls_array,
)

__all__ = [
    "Action", "ContactReport", "InvalidActionError", "PhysicsParams", "Pose2D", "RigidBody2D",
    "WorldState", "body_vertices", "integrate_unicycle", "make_box", "make_robot", "rows_vertices",
    "step_world", "walls_array", "DT", "SUBSTEPS_PER_ACTION", "V_MIN", "V_MAX", "OMEGA_MAX",
    "ROBOT_HALF_EXTENTS", "ROBOT_MASS", "BOX_HALF_EXTENTS", "BOX_MASS", "BOX_FLOOR_FRICTION",
    "WALL_THICKNESS", "DEFAULT_PARAMS",
]
