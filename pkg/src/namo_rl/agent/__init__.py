"""Actor-critic network, clipped-surrogate loss, the training loop and an estimator wrapper."""
from .algo import (
    ACTION_HIGH, ACTION_LOW, ACTION_SCALE, RunningMeanStd, adaptive_lr, clipped_loss, compute_advantages,
    sample_action, surrogate, to_physical,
)
from .estimator import ActorCriticAgent, check_observation_batch
from .network import PolicyNetwork
from .trainer import TrainConfig, Trainer, config_hash

__all__ = [
    "ACTION_HIGH", "ACTION_LOW", "ACTION_SCALE", "RunningMeanStd", "adaptive_lr", "clipped_loss",
    "compute_advantages", "sample_action", "surrogate", "to_physical", "ActorCriticAgent",
    "check_observation_batch", "PolicyNetwork", "TrainConfig", "Trainer", "config_hash",
]
