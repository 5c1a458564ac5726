"""Batched NAMO environment plus a single-episode wrapper."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..physics import DEFAULT_PARAMS, OMEGA_MAX, SUBSTEPS_PER_ACTION, V_MAX, Action, PhysicsParams, WorldState
from ..physics import kernels as K
from ..scenegen import MapLayout, Scene, SceneGenerationError, SpawnConfig, generate_scene
from ..scenegen.maps import MAX_WALLS
from .observation import (
    GOAL_RADIUS, GRID_SIZE, HISTORY, NoiseConfig, Normalizer, Observation, box_noise_mask, build_vector, clip_action,
    normalize_action, paint_bodies, static_grid,
)
from .reward import POLICY_DT, TERMS, RewardBreakdown, forward_speed, reward_terms

MAX_STEPS = 135
PUSH_DISTANCE = 0.05
PUSH_ANGLE = math.radians(5.0)
SCENE_RETRIES = 20

TRAIN_NAMESPACE = 0x7A11
EVAL_NAMESPACE = 0xE7A1


class EpisodeFinishedError(RuntimeError):
    """step() called on an episode that already ended."""


@dataclass(frozen=True)
class EpisodeStatus:
    steps_elapsed: int
    done: bool
    outcome: str  # "success" | "timeout" | "running"


def boxes_moved(initial: np.ndarray, final: np.ndarray, distance: float = PUSH_DISTANCE,
                angle: float = PUSH_ANGLE) -> int:
    """Present boxes displaced more than ``distance`` or rotated more than ``angle``; rows are (5, NBF)."""
    present = (initial[:, K.BACTIVE] > 0) & (final[:, K.BACTIVE] > 0)
    d = np.hypot(final[:, K.BX] - initial[:, K.BX], final[:, K.BY] - initial[:, K.BY])
    dth = np.abs((final[:, K.BTH] - initial[:, K.BTH] + math.pi) % (2 * math.pi) - math.pi)
    return int(np.sum(present & ((d > distance) | (dth > angle))))


def seed_streams(namespace: int, seed: int, n: int) -> List[Tuple[np.random.Generator, np.random.Generator]]:
    """Independent (scene, noise) generators per environment."""
    children = np.random.SeedSequence([namespace, seed]).spawn(n)
    return [tuple(np.random.default_rng(s) for s in c.spawn(2)) for c in children]


class VecEnv:
    """E independent episodes stepped together through the batched physics kernel.

    With ``auto_reset`` finished episodes are replaced immediately and the
    returned observation belongs to the new episode.
    """

    def __init__(self, maps: Sequence[MapLayout], n_envs: int = 1, spawn: SpawnConfig = SpawnConfig(),
                 noise: NoiseConfig = NoiseConfig(), seed: int = 0, auto_reset: bool = True,
                 params: PhysicsParams = DEFAULT_PARAMS, lam_fn: Optional[Callable[[str], float]] = None,
                 namespace: int = TRAIN_NAMESPACE, max_steps: int = MAX_STEPS):
        if n_envs < 1:
            raise ValueError("n_envs must be >= 1")
        self.maps = list(maps)
        self.n = n_envs
        self.spawn = spawn
        self.noise = noise
        self.auto_reset = auto_reset
        self.params = params
        self.prm = params.as_array()
        self.lam_fn = lam_fn
        self.max_steps = max_steps
        self.map_index = np.arange(n_envs) % len(self.maps)
        bounds = {m.room_bounds for m in self.maps}
        if len(bounds) != 1:
            raise ValueError("all maps in one batch must share room bounds")
        self.bounds = self.maps[0].room_bounds
        self.cell = (self.bounds[2] - self.bounds[0]) / GRID_SIZE
        self.norm = Normalizer(self.maps[0])
        self.diagonal = self.maps[0].diagonal

        E = n_envs
        self.bodies = np.zeros((E, K.N_BODIES, K.NBF))
        self.walls = np.zeros((E, MAX_WALLS, K.NWF))
        self.goals = np.zeros((E, 2))
        self.static = np.zeros((E, GRID_SIZE, GRID_SIZE))
        self.rp_hist = np.zeros((E, HISTORY, 6))
        self.bv_hist = np.zeros((E, HISTORY, 40))
        self.a_hist = np.zeros((E, HISTORY, 2))
        self.steps = np.zeros(E, dtype=np.int64)
        self.returns = np.zeros(E)
        self.initial_boxes = np.zeros((E, K.MAX_BOXES, K.NBF))
        self.done = np.zeros(E, dtype=bool)
        self.reports = np.zeros((E, K.NREPORT))
        self.rngs = seed_streams(namespace, seed, E)

    # -- helpers -------------------------------------------------------------------------------
    def layout(self, i: int) -> MapLayout:
        return self.maps[self.map_index[i]]

    @property
    def box_present(self) -> np.ndarray:
        return self.bodies[:, 1:, K.BACTIVE] > 0

    def world(self, i: int) -> WorldState:
        return WorldState(self.bodies[i].copy(), self.walls[i].copy(), float(self.steps[i] * POLICY_DT))

    # -- episode control -----------------------------------------------------------------------
    def make_scene(self, i: int, rng: np.random.Generator) -> Scene:
        layout = self.layout(i)
        cfg = self.spawn if self.lam_fn is None else self.spawn.with_lambda(self.lam_fn(layout.id))
        for _ in range(SCENE_RETRIES):
            try:
                return generate_scene(layout, cfg, rng)
            except SceneGenerationError:
                continue
        raise SceneGenerationError(f"map {layout.id}: {SCENE_RETRIES} consecutive generation failures")

    def load_scene(self, i: int, scene: Scene, noise_rng: Optional[np.random.Generator] = None):
        if noise_rng is not None:
            self.rngs[i] = (self.rngs[i][0], noise_rng)
        self.bodies[i] = scene.world.bodies
        self.walls[i] = scene.world.walls
        self.goals[i] = scene.goal
        self.static[i] = static_grid(scene.map, scene.goal)
        self.initial_boxes[i] = scene.world.bodies[1:]
        self.rp_hist[i] = self.norm.robot_frame(self.bodies[i, 0])[None]
        self.bv_hist[i] = self.norm.box_frame(self.bodies[i, 1:])[None]
        self.a_hist[i] = 0.0
        self.steps[i] = 0
        self.returns[i] = 0.0
        self.done[i] = False

    def reset_env(self, i: int) -> Scene:
        scene = self.make_scene(i, self.rngs[i][0])
        self.load_scene(i, scene)
        return scene

    def reset(self) -> Observation:
        for i in range(self.n):
            self.reset_env(i)
        return self.observe()

    def clean_observation(self, rows=None) -> Observation:
        rows = np.arange(self.n) if rows is None else np.asarray(rows, dtype=np.int64)
        goal = np.clip(self.norm.positions(self.goals[rows]), -1.0, 1.0)
        vec = build_vector(goal, self.rp_hist[rows], self.bv_hist[rows], self.a_hist[rows])
        grid = np.empty((len(rows), GRID_SIZE, GRID_SIZE))
        paint_bodies(grid, self.static[rows], self.bodies[rows], self.bounds[0], self.bounds[1], self.cell)
        return Observation(vec, grid)

    def observe(self, rows=None) -> Observation:
        """Noisy observation of every env, or only of ``rows`` (noise is drawn for those envs alone)."""
        rows = np.arange(self.n) if rows is None else np.asarray(rows, dtype=np.int64)
        obs = self.clean_observation(rows)
        vec, grid = obs.vector.astype(np.float32), obs.grid.astype(np.float32)
        sv, sg = self.noise.sigma_vector, self.noise.sigma_grid
        if sv > 0 or sg > 0:
            nv = vec.shape[1]
            eps = np.empty((len(rows), nv + GRID_SIZE * GRID_SIZE), dtype=np.float32)
            for k, i in enumerate(rows):
                self.rngs[i][1].standard_normal(out=eps[k], dtype=np.float32)
            mask = box_noise_mask(self.box_present[rows]).astype(np.float32)
            vec = np.clip(vec + np.float32(sv) * eps[:, :nv] * mask, -1.0, 1.0)
            grid = np.clip(grid + np.float32(sg) * eps[:, nv:].reshape(grid.shape), -1.0, 1.0)
        return Observation(vec, grid)

    def _noisy_actions(self, actions: np.ndarray) -> np.ndarray:
        if self.noise.sigma_action <= 0:
            return actions.copy()
        scale = np.array([V_MAX, OMEGA_MAX]) * self.noise.sigma_action
        eps = np.stack([self.rngs[i][1].normal(0.0, 1.0, 2) for i in range(self.n)])
        return clip_action(actions + eps * scale)

    def step(self, actions: np.ndarray):
        """Advance every env one policy step.

        Returns ``(obs, reward_terms (E, 10), done (E,), success (E,), episodes)`` where
        ``episodes`` lists a summary dict for each episode that ended on this step.
        """
        actions = clip_action(np.asarray(actions, dtype=float).reshape(self.n, 2))
        if not np.all(np.isfinite(actions)):
            raise ValueError("non-finite action")
        if not self.auto_reset and np.any(self.done):
            raise EpisodeFinishedError("step() on a finished episode; call reset()")
        applied = self._noisy_actions(actions)
        prev_xy = self.bodies[:, 0, [K.BX, K.BY]].copy()
        d0 = np.hypot(*(self.goals - prev_xy).T)
        K.step_batch_kernel(self.bodies, self.walls, applied, SUBSTEPS_PER_ACTION, self.prm, self.goals, self.reports)
        self.steps += 1
        success = np.minimum(self.reports[:, K.R_GOAL_DIST], d0) <= GOAL_RADIUS
        timeout = ~success & (self.steps >= self.max_steps)
        done = success | timeout
        robot = self.bodies[:, 0]
        wall_hit = self.reports[:, K.R_ROBOT_WALL] > 0
        box_hit = np.any(self.reports[:, K.R_ROBOT_BOX:K.R_ROBOT_BOX + K.MAX_BOXES] > 0, axis=1)
        rew = reward_terms(prev_xy, robot[:, [K.BX, K.BY]], forward_speed(robot), robot[:, K.BW], applied,
                           wall_hit, box_hit, self.goals, success, self.diagonal)
        self.returns += rew.sum(axis=1)

        self.rp_hist[:, :-1] = self.rp_hist[:, 1:]
        self.rp_hist[:, -1] = self.norm.robot_frame(robot)
        self.bv_hist[:, :-1] = self.bv_hist[:, 1:]
        self.bv_hist[:, -1] = self.norm.box_frame(self.bodies[:, 1:])
        self.a_hist[:, :-1] = self.a_hist[:, 1:]
        self.a_hist[:, -1] = normalize_action(actions)
        self.last_applied = applied
        self.last_contacts = (wall_hit, box_hit)

        episodes = []
        for i in np.flatnonzero(done):
            episodes.append({
                "env": int(i),
                "map": self.layout(i).id,
                "success": bool(success[i]),
                "steps": int(self.steps[i]),
                "time": float(self.steps[i] * POLICY_DT),
                "return": float(self.returns[i]),
                "boxes_present": int(np.sum(self.initial_boxes[i, :, K.BACTIVE] > 0)),
                "boxes_pushed": boxes_moved(self.initial_boxes[i], self.bodies[i, 1:]),
                "final_bodies": self.bodies[i].copy(),
                "goal": self.goals[i].copy(),
            })
            if self.auto_reset:
                self.reset_env(i)
            else:
                self.done[i] = True
        return self.observe(), rew, done, success, episodes

    # -- checkpoint support ------------------------------------------------------------------
    _ARRAYS = ("bodies", "walls", "goals", "static", "rp_hist", "bv_hist", "a_hist", "steps", "returns",
               "initial_boxes", "done", "map_index")

    def get_state(self) -> Dict[str, Any]:
        return {
            "arrays": {k: getattr(self, k).copy() for k in self._ARRAYS},
            "rngs": [[g.bit_generator.state for g in pair] for pair in self.rngs],
        }

    def set_state(self, state: Dict[str, Any]):
        for k in self._ARRAYS:
            arr = np.asarray(state["arrays"][k])
            if arr.shape != getattr(self, k).shape:
                raise ValueError(f"env state {k}: shape {arr.shape} != {getattr(self, k).shape}")
            getattr(self, k)[...] = arr
        for pair, saved in zip(self.rngs, state["rngs"]):
            for g, s in zip(pair, saved):
                g.bit_generator.state = s


class NamoEnv:
    """Single episode interface: reset() then step(action) until done."""

    def __init__(self, layout: MapLayout, spawn: SpawnConfig = SpawnConfig(), noise: NoiseConfig = NoiseConfig(),
                 seed: int = 0, params: PhysicsParams = DEFAULT_PARAMS, namespace: int = TRAIN_NAMESPACE):
        self.vec = VecEnv([layout], 1, spawn, noise, seed, auto_reset=False, params=params, namespace=namespace)
        self.scene: Optional[Scene] = None
        self.status = EpisodeStatus(0, True, "running")
        self.last_record: Optional[Dict[str, Any]] = None

    @property
    def layout(self) -> MapLayout:
        return self.vec.maps[0]

    @property
    def world(self) -> WorldState:
        return self.vec.world(0)

    @property
    def goal(self) -> np.ndarray:
        return self.vec.goals[0].copy()

    def reset(self, layout: Optional[MapLayout] = None, spawn_cfg: Optional[SpawnConfig] = None,
              rng: Optional[np.random.Generator] = None) -> Observation:
        if layout is not None:
            self.vec.maps = [layout]
        if spawn_cfg is not None:
            self.vec.spawn = spawn_cfg
        scene = self.vec.make_scene(0, rng if rng is not None else self.vec.rngs[0][0])
        return self.reset_to(scene)

    def reset_to(self, scene: Scene, noise_rng: Optional[np.random.Generator] = None) -> Observation:
        """Start an episode from a given scene (e.g. a hand-built one)."""
        self.vec.maps = [scene.map]
        self.vec.load_scene(0, scene, noise_rng)
        self.scene = scene
        self.status = EpisodeStatus(0, False, "running")
        return self.vec.observe()[0]

    def step(self, action) -> Tuple[Observation, RewardBreakdown, EpisodeStatus]:
        if self.status.done:
            raise EpisodeFinishedError("episode finished; call reset()")
        if isinstance(action, Action):
            action.validate()
            a = np.array([action.v_x, action.theta_dot_z])
        else:
            a = np.asarray(action, dtype=float)
        obs, rew, done, success, _ = self.vec.step(a[None])
        outcome = "success" if success[0] else ("timeout" if done[0] else "running")
        self.status = EpisodeStatus(int(self.vec.steps[0]), bool(done[0]), outcome)
        reward = RewardBreakdown.from_row(rew[0])
        self.last_record = self._record(a, reward)
        return obs[0], reward, self.status

    def _record(self, target: np.ndarray, reward: RewardBreakdown) -> Dict[str, Any]:
        b = self.vec.bodies[0]
        applied = self.vec.last_applied[0]
        wall_hit, box_hit = self.vec.last_contacts
        return {
            "t": round(float(self.vec.steps[0] * POLICY_DT), 9),
            "robot": [float(b[0, K.BX]), float(b[0, K.BY]), float(b[0, K.BTH])],
            "boxes": [[float(r[K.BX]), float(r[K.BY]), float(r[K.BTH])] if r[K.BACTIVE] > 0 else None
                      for r in b[1:]],
            "action_target": [float(v) for v in applied],
            "action_policy": [float(v) for v in target],
            "action_actual": [float(forward_speed(b[0])), float(b[0, K.BW])],
            "reward": reward.as_dict(),
            "contacts": {"wall": bool(wall_hit[0]), "box": bool(box_hit[0])},
            "status": self.status.outcome,
        }
