"""Evaluation sweeps over (map, lambda) cells: completion, time taken, boxes pushed, failure tallies."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .agent.algo import sample_action, to_physical
from .agent.network import PolicyNetwork
from .env import NoiseConfig, Observation, VecEnv
from .env.observation import A_SLICE, G_SLICE, HISTORY, RP_SIZE, RP_SLICE
from .env.vec_env import EVAL_NAMESPACE, TRAIN_NAMESPACE, boxes_moved
from .physics import OMEGA_MAX, V_MAX, WorldState
from .physics import kernels as K
from .scenegen import MapLayout, SpawnConfig, generate_scene, point_connected

Policy = Callable[[Observation], np.ndarray]  # observation batch -> physical actions (E, 2)


@dataclass(frozen=True)
class EvalConfig:
    maps: tuple = ("c",)
    lambdas: tuple = (0.0, 0.2, 0.4)
    scenes: int = 1000
    deterministic: bool = True
    noise: NoiseConfig = NoiseConfig()
    seed: int = 0
    n_envs: int = 64

    def __post_init__(self):
        if self.scenes < 1:
            raise ValueError("scenes per cell must be >= 1")
        if any(not 0.0 <= lam <= 1.0 for lam in self.lambdas):
            raise ValueError("lambda values must lie in [0, 1]")
        if self.n_envs < 1:
            raise ValueError("n_envs must be >= 1")


@dataclass
class EpisodeResult:
    map: str
    lam: float
    scene: int
    success: bool
    steps: int
    time: float
    boxes_present: int
    boxes_pushed: int
    failure: Optional[str]


@dataclass
class EvalMetrics:
    map: str
    lam: float
    scenes: int
    successes: int
    timeouts: int
    completion_rate: float
    mean_time_taken: float
    mean_boxes_pushed: float
    mean_boxes_present: float
    timeout_blocked: int
    timeout_wandering: int

    def row(self) -> Dict[str, object]:
        return asdict(self)


def count_boxes_pushed(initial: WorldState, final: WorldState) -> int:
    """Present boxes moved more than 5 cm or turned more than 5 degrees."""
    return boxes_moved(initial.bodies[1:], final.bodies[1:])


def classify_failure(layout: MapLayout, final_bodies: np.ndarray, goal, success: bool = False) -> str:
    """timeout_blocked when no free path joins robot and goal with boxes as obstacles, else timeout_wandering."""
    if success:
        raise ValueError("classify_failure applies to timed-out episodes only")
    robot = final_bodies[0, [K.BX, K.BY]]
    if point_connected(layout, robot, goal, boxes=final_bodies[1:]):
        return "timeout_wandering"
    return "timeout_blocked"


class NetworkPolicy:
    def __init__(self, net: PolicyNetwork, deterministic: bool = True, rng: Optional[np.random.Generator] = None):
        self.net = net
        self.deterministic = deterministic
        self.rng = rng or np.random.default_rng(0)

    def __call__(self, obs: Observation) -> np.ndarray:
        self.net.set_norm_mode("running", track=False)
        mean, log_std, _ = self.net(obs.vector, obs.grid)
        _, act, _ = sample_action(mean.data, log_std.data, self.rng, self.deterministic)
        return to_physical(act)


class GoToGoal:
    """Scripted baseline: turn toward the goal, drive when roughly facing it. Reads only the observation."""

    def __init__(self, layout: MapLayout, gain: float = 2.0):
        self.center = layout.center
        self.half = layout.half_size
        self.gain = gain

    def __call__(self, obs: Observation) -> np.ndarray:
        v = np.asarray(obs.vector, dtype=float)
        goal = v[:, G_SLICE] * self.half + self.center
        rp = v[:, RP_SLICE].reshape(-1, HISTORY, RP_SIZE)[:, -1]
        xy = rp[:, 0:2] * self.half + self.center
        th = rp[:, 4] * math.pi
        d = goal - xy
        err = (np.arctan2(d[:, 1], d[:, 0]) - th + math.pi) % (2 * math.pi) - math.pi
        w = np.clip(self.gain * err, -OMEGA_MAX, OMEGA_MAX)
        speed = np.where(np.abs(err) < math.pi / 3, V_MAX * np.cos(err), 0.0)
        return np.stack([speed, w], axis=1)


def scene_streams(seed: int, map_index: int, lam: float, scene: int):
    ss = np.random.SeedSequence([EVAL_NAMESPACE, seed, map_index, int(round(lam * 1000)), scene])
    return tuple(np.random.default_rng(s) for s in ss.spawn(2))


def evaluate_cell(policy: Policy, layout: MapLayout, lam: float, cfg: EvalConfig, map_index: int = 0,
                  spawn: SpawnConfig = SpawnConfig()) -> List[EpisodeResult]:
    """Run ``cfg.scenes`` fresh scenes; scene j is seeded only by (seed, map, lambda, j)."""
    assert EVAL_NAMESPACE != TRAIN_NAMESPACE
    spawn = spawn.with_lambda(lam)
    E = min(cfg.n_envs, cfg.scenes)
    env = VecEnv([layout], E, spawn, cfg.noise, cfg.seed, auto_reset=False, namespace=EVAL_NAMESPACE)
    slot_scene = np.full(E, -1)
    nxt = 0
    results: Dict[int, EpisodeResult] = {}

    def load(i):
        nonlocal nxt
        if nxt < cfg.scenes:
            scene_rng, noise_rng = scene_streams(cfg.seed, map_index, lam, nxt)
            env.load_scene(i, generate_scene(layout, spawn, scene_rng), noise_rng)
            slot_scene[i] = nxt
            nxt += 1
        else:
            env.done[i] = False  # idle slot keeps stepping; its output is ignored
            slot_scene[i] = -1

    for i in range(E):
        load(i)
    obs = env.observe()
    while np.any(slot_scene >= 0):
        actions = np.asarray(policy(obs), dtype=float)
        obs, _, done, success, episodes = env.step(actions)
        reloaded = []
        for ep in episodes:
            i = ep["env"]
            j = int(slot_scene[i])
            if j >= 0:
                failure = None if ep["success"] else classify_failure(layout, ep["final_bodies"], ep["goal"])
                results[j] = EpisodeResult(layout.id, lam, j, ep["success"], ep["steps"], ep["time"],
                                           ep["boxes_present"], ep["boxes_pushed"], failure)
            load(i)
            reloaded.append(i)
        if reloaded:
            # fresh scenes get their first observation; running envs keep theirs
            fresh = env.observe(rows=reloaded)
            obs.vector[reloaded], obs.grid[reloaded] = fresh.vector, fresh.grid
    return [results[j] for j in range(cfg.scenes)]


def record_episode(policy: Policy, layout: MapLayout, lam: float, cfg: EvalConfig, scene: int = 0,
                   map_index: int = 0, spawn: SpawnConfig = SpawnConfig(), config_hash: str = ""):
    """Replay evaluation scene ``scene`` in a single env and return (header, step records) for a trajectory log."""
    from .env import NamoEnv

    spawn = spawn.with_lambda(lam)
    scene_rng, noise_rng = scene_streams(cfg.seed, map_index, lam, scene)
    sc = generate_scene(layout, spawn, scene_rng)
    env = NamoEnv(layout, spawn, cfg.noise, cfg.seed, namespace=EVAL_NAMESPACE)
    o = env.reset_to(sc, noise_rng)
    b = sc.world.bodies
    header = {
        "map": layout.id, "lambda": lam, "scene": scene, "seed": cfg.seed, "config_hash": config_hash,
        "goal": [float(v) for v in sc.goal], "bounds": [float(v) for v in layout.room_bounds],
        "walls": [[float(v) for v in w] for w in layout.walls], "wall_thickness": layout.wall_thickness,
        "initial": {"robot": [float(b[0, K.BX]), float(b[0, K.BY]), float(b[0, K.BTH])],
                    "boxes": [[float(r[K.BX]), float(r[K.BY]), float(r[K.BTH])] if r[K.BACTIVE] > 0 else None
                              for r in b[1:]]},
    }
    records = []
    status = env.status
    while not status.done:
        action = np.asarray(policy(Observation(o.vector[None], o.grid[None])), dtype=float)[0]
        o, _, status = env.step(action)
        records.append(env.last_record)
    return header, records


def aggregate(results: Sequence[EpisodeResult]) -> EvalMetrics:
    ok = [r for r in results if r.success]
    n = len(results)
    return EvalMetrics(
        map=results[0].map, lam=results[0].lam, scenes=n, successes=len(ok), timeouts=n - len(ok),
        completion_rate=len(ok) / n,
        mean_time_taken=float(np.mean([r.time for r in ok])) if ok else float("nan"),
        mean_boxes_pushed=float(np.mean([r.boxes_pushed for r in ok])) if ok else float("nan"),
        mean_boxes_present=float(np.mean([r.boxes_present for r in results])),
        timeout_blocked=sum(r.failure == "timeout_blocked" for r in results),
        timeout_wandering=sum(r.failure == "timeout_wandering" for r in results),
    )


def evaluate(policy_factory: Callable[[MapLayout, float], Policy], layouts: Sequence[MapLayout],
             cfg: EvalConfig, spawn: SpawnConfig = SpawnConfig()) -> List[EvalMetrics]:
    """One EvalMetrics row per (map, lambda) cell. The factory gets a fresh policy per cell."""
    rows = []
    for mi, layout in enumerate(layouts):
        for lam in cfg.lambdas:
            rows.append(aggregate(evaluate_cell(policy_factory(layout, lam), layout, lam, cfg, mi, spawn)))
    return rows


TABLE_COLUMNS = ("map", "lambda", "scenes", "boxes", "completion_rate", "time_taken", "boxes_pushed",
                 "timeout_blocked", "timeout_wandering")


def table_rows(rows: Sequence[EvalMetrics]) -> List[Dict[str, object]]:
    return [{"map": r.map, "lambda": r.lam, "scenes": r.scenes, "boxes": round(r.mean_boxes_present, 3),
             "completion_rate": round(r.completion_rate, 4), "time_taken": round(r.mean_time_taken, 3),
             "boxes_pushed": round(r.mean_boxes_pushed, 3), "timeout_blocked": r.timeout_blocked,
             "timeout_wandering": r.timeout_wandering} for r in rows]


def write_results(rows: Sequence[EvalMetrics], out_dir, meta: Optional[dict] = None) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / "eval.csv", out / "eval_summary.json"
    with open(csv_path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=TABLE_COLUMNS)
        w.writeheader()
        w.writerows(table_rows(rows))
    summary = {"cells": [r.row() for r in rows], **(meta or {})}
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True))
    return {"csv": csv_path, "summary": json_path}


def format_table(rows: Sequence[EvalMetrics]) -> str:
    lines = ["map  lambda  boxes  completion  time(s)  pushed  blocked  wandering"]
    for r in rows:
        lines.append(f"{r.map:<4} {r.lam:>6.2f} {r.mean_boxes_present:>6.2f} {100 * r.completion_rate:>10.1f}% "
                     f"{r.mean_time_taken:>8.2f} {r.mean_boxes_pushed:>7.2f} {r.timeout_blocked:>8d} "
                     f"{r.timeout_wandering:>10d}")
    return "\n".join(lines)
