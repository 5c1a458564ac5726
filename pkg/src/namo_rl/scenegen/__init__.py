"""Room layouts, randomized scene spawning and the difficulty curriculum."""
from .curriculum import CurriculumState, curriculum_update
from .generate import (
    ABSENT, CHALLENGING, RANDOM, Scene, SceneGenerationError, SpawnConfig, draw_slot_modes, generate_scene,
    scene_rng,
)
from .maps import (
    HELD_OUT_MAP_ID, MAP_IDS, TRAIN_MAP_IDS, MapLayout, MapValidationError, get_map, load_map, occupancy,
    point_connected, regions_connected,
)

__all__ = [
    "CurriculumState", "curriculum_update", "Scene", "SceneGenerationError", "SpawnConfig", "draw_slot_modes",
    "generate_scene", "scene_rng", "MapLayout", "MapValidationError", "get_map", "load_map", "occupancy",
    "point_connected", "regions_connected", "MAP_IDS", "TRAIN_MAP_IDS", "HELD_OUT_MAP_ID",
    "ABSENT", "RANDOM", "CHALLENGING",
]
