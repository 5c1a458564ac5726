"""Episodic NAMO environment: observations, reward, termination and input noise."""
from .observation import (
    GOAL_RADIUS, GRID_SIZE, HISTORY, VECTOR_SIZE, ContractViolation, NoiseConfig, Normalizer, Observation,
    apply_noise, build_vector, rasterize_grid, static_grid,
)
from .reward import TERMS, WEIGHTS, RewardBreakdown, compute_reward, reward_terms
from .vec_env import (
    EVAL_NAMESPACE, MAX_STEPS, TRAIN_NAMESPACE, EpisodeFinishedError, EpisodeStatus, NamoEnv, VecEnv,
    boxes_moved, seed_streams,
)

__all__ = [
    "GOAL_RADIUS", "GRID_SIZE", "HISTORY", "VECTOR_SIZE", "ContractViolation", "NoiseConfig", "Normalizer",
    "Observation", "apply_noise", "build_vector", "rasterize_grid", "static_grid", "TERMS", "WEIGHTS",
    "RewardBreakdown", "compute_reward", "reward_terms", "EVAL_NAMESPACE", "MAX_STEPS", "TRAIN_NAMESPACE",
    "EpisodeFinishedError", "EpisodeStatus", "NamoEnv", "VecEnv", "boxes_moved", "seed_streams",
]
