"""Checkpoints, trajectory logs and frame rendering."""
from .checkpoint import FORMAT_VERSION, CheckpointError, load_checkpoint, save_checkpoint
from .render import box_pixel_centroid, draw_scene, render_trajectory
from .trajectory import TrajectoryError, read_trajectory, write_trajectory

__all__ = [
    "FORMAT_VERSION", "CheckpointError", "load_checkpoint", "save_checkpoint", "box_pixel_centroid",
    "draw_scene", "render_trajectory", "TrajectoryError", "read_trajectory", "write_trajectory",
]
