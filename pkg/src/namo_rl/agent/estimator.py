"""scikit-learn style wrapper around the trainer and policy network."""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ..env import GRID_SIZE, VECTOR_SIZE, NoiseConfig, Observation
from ..scenegen import CurriculumState, MapLayout, SpawnConfig, get_map
from .algo import sample_action, to_physical
from .trainer import TrainConfig, Trainer

ObservationLike = Union[Observation, Tuple[np.ndarray, np.ndarray]]


def check_observation_batch(X: ObservationLike) -> Observation:
    """Coerce ``X`` to a float32 Observation batch of shape (B, 242) / (B, 48, 48).

    Accepts an Observation or a ``(vector, grid)`` pair; a single unbatched
    observation gets a leading batch axis.
    """
    if isinstance(X, Observation):
        vec, grid = X.vector, X.grid
    elif isinstance(X, (tuple, list)) and len(X) == 2:
        vec, grid = X
    else:
        raise TypeError("expected an Observation or a (vector, grid) pair")
    vec = np.asarray(vec, dtype=np.float32)
    grid = np.asarray(grid, dtype=np.float32)
    if vec.ndim == 1:
        vec = vec[None]
    if grid.ndim == 2:
        grid = grid[None]
    if vec.ndim != 2 or vec.shape[1] != VECTOR_SIZE:
        raise ValueError(f"vector batch must have shape (B, {VECTOR_SIZE}), got {vec.shape}")
    if grid.shape[1:] != (GRID_SIZE, GRID_SIZE):
        raise ValueError(f"grid batch must have shape (B, {GRID_SIZE}, {GRID_SIZE}), got {grid.shape}")
    if vec.shape[0] != grid.shape[0]:
        raise ValueError(f"batch sizes differ: vector {vec.shape[0]} vs grid {grid.shape[0]}")
    if not (np.isfinite(vec).all() and np.isfinite(grid).all()):
        raise ValueError("observation contains NaN or inf")
    return Observation(vec, grid)


class ActorCriticAgent(BaseEstimator):
    """Clipped-surrogate actor-critic for NAMO keyhole scenes.

    ``fit`` trains on the given maps; ``predict`` maps observations to physical
    (v_x, omega) commands; ``score`` returns completion rate on fresh evaluation
    scenes.
    """

    def __init__(self, maps: Sequence[str] = ("c",), lam: float = 0.2, fixed_lambda: bool = False,
                 n_envs: int = 64, n_updates: int = 100, horizon: int = 50, minibatch: int = 2000,
                 epochs: int = 2, lr: float = 3e-4, gamma: float = 0.99, clip_eps: float = 0.2,
                 entropy_coef: float = 0.01, value_coef: float = 0.5, kl_target: float = 0.008,
                 noise: Optional[NoiseConfig] = None, deterministic: bool = True, seed: int = 0):
        self.maps = maps
        self.lam = lam
        self.fixed_lambda = fixed_lambda
        self.n_envs = n_envs
        self.n_updates = n_updates
        self.horizon = horizon
        self.minibatch = minibatch
        self.epochs = epochs
        self.lr = lr
        self.gamma = gamma
        self.clip_eps = clip_eps
        self.entropy_coef = entropy_coef
        self.value_coef = value_coef
        self.kl_target = kl_target
        self.noise = noise
        self.deterministic = deterministic
        self.seed = seed

    def _layouts(self) -> List[MapLayout]:
        return [m if isinstance(m, MapLayout) else get_map(m) for m in self.maps]

    def _train_config(self) -> TrainConfig:
        return TrainConfig(gamma=self.gamma, clip_eps=self.clip_eps, entropy_coef=self.entropy_coef,
                           value_coef=self.value_coef, lr=self.lr, kl_target=self.kl_target, horizon=self.horizon,
                           minibatch=self.minibatch, epochs=self.epochs, n_envs=self.n_envs,
                           updates=self.n_updates)

    def fit(self, X=None, y=None):
        """Train from scratch for ``n_updates``. X and y are ignored (the data is simulated)."""
        layouts = self._layouts()
        cur = CurriculumState.start([m.id for m in layouts], self.lam, frozen=self.fixed_lambda)
        self.trainer_ = Trainer(layouts, self._train_config(), SpawnConfig(self.lam),
                                self.noise if self.noise is not None else NoiseConfig(), self.seed, cur)
        self.history_ = list(self.trainer_.run(self.n_updates))
        self.network_ = self.trainer_.net
        return self

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("call fit() before using this agent")

    def predict(self, X: ObservationLike) -> np.ndarray:
        self._check_fitted()
        obs = check_observation_batch(X)
        self.network_.set_norm_mode("running", track=False)
        mean, log_std, _ = self.network_(obs.vector, obs.grid)
        rng = np.random.default_rng(self.seed)
        _, act, _ = sample_action(mean.data, log_std.data, rng, self.deterministic)
        return to_physical(act)

    def score(self, X=None, y=None, scenes: int = 100, lam: Optional[float] = None) -> float:
        """Mean completion rate over fresh evaluation scenes on every training map."""
        from ..evalbench import EvalConfig, NetworkPolicy, evaluate

        self._check_fitted()
        lam = self.lam if lam is None else lam
        cfg = EvalConfig(maps=tuple(m.id for m in self._layouts()), lambdas=(lam,), scenes=scenes,
                         deterministic=self.deterministic, seed=self.seed, n_envs=min(self.n_envs, scenes))
        rows = evaluate(lambda layout, _: NetworkPolicy(self.network_, self.deterministic), self._layouts(), cfg)
        return float(np.mean([r.completion_rate for r in rows]))
