"""Synchronous rollout / clipped-surrogate update loop."""
from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..env import NoiseConfig, Observation, VecEnv
from ..env.vec_env import TRAIN_NAMESPACE
from ..nn import AdamState, adam_step
from ..scenegen import CurriculumState, MapLayout, SpawnConfig, curriculum_update
from .algo import RunningMeanStd, adaptive_lr, clipped_loss, compute_advantages, sample_action, to_physical
from .network import PolicyNetwork

ROLLING_WINDOW = 200


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    clip_eps: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    lr: float = 3e-4
    kl_target: float = 0.008
    adapt_lr: bool = True
    horizon: int = 50
    minibatch: int = 2000
    epochs: int = 2
    n_envs: int = 64
    updates: int = 3000
    max_norm: float = 1.0
    weight_decay: float = 1e-4
    normalize_advantages: bool = True
    normalize_values: bool = True
    bootstrap_timeouts: bool = True

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not self.clip_eps > 0:
            raise ValueError("clip_eps must be > 0")
        for name in ("entropy_coef", "value_coef", "lr", "kl_target", "max_norm", "weight_decay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("horizon", "minibatch", "epochs", "n_envs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.updates < 0:
            raise ValueError("updates must be >= 0")


def config_hash(doc: Dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()[:16]


class Trainer:
    def __init__(self, maps: Sequence[MapLayout], config: TrainConfig = TrainConfig(),
                 spawn: SpawnConfig = SpawnConfig(), noise: NoiseConfig = NoiseConfig(), seed: int = 0,
                 curriculum: Optional[CurriculumState] = None):
        self.maps = list(maps)
        self.config = config
        self.spawn = spawn
        self.noise = noise
        self.seed = seed
        self.curriculum = curriculum or CurriculumState.start([m.id for m in self.maps], spawn.lam)
        self.net = PolicyNetwork(seed=seed)
        self.params = self.net.parameters()
        self.adam = AdamState.for_params(self.params, lr=config.lr, weight_decay=config.weight_decay,
                                         max_norm=config.max_norm)
        ss = np.random.SeedSequence([TRAIN_NAMESPACE, seed, 1])
        self.action_rng, self.shuffle_rng = (np.random.default_rng(s) for s in ss.spawn(2))
        self.env = VecEnv(self.maps, config.n_envs, spawn, noise, seed, auto_reset=True, lam_fn=self.curriculum.lam)
        self.obs = self.env.reset()
        self.update = 0
        self.rolling: deque = deque(maxlen=ROLLING_WINDOW)
        self.episodes_total = 0
        self.value_norm = RunningMeanStd()

    # ------------------------------------------------------------------------------------------
    def run_config(self) -> Dict[str, Any]:
        c = asdict(self.config)
        c.pop("updates")
        return {"train": c, "spawn": asdict(self.spawn), "noise": asdict(self.noise), "seed": self.seed,
                "maps": [m.to_document() for m in self.maps]}

    def config_hash(self) -> str:
        return config_hash(self.run_config())

    def policy_outputs(self, obs: Observation):
        mean, log_std, value = self.net(obs.vector, obs.grid)
        v = value.data[:, 0]
        if self.config.normalize_values:
            v = self.value_norm.denormalize(v)
        return mean.data, log_std.data, v

    def collect(self):
        cfg, E, T = self.config, self.config.n_envs, self.config.horizon
        vec = np.empty((T, E, self.obs.vector.shape[1]), dtype=np.float32)
        grid = np.empty((T, E) + self.obs.grid.shape[1:], dtype=np.float32)
        raw = np.empty((T, E, 2))
        logp = np.empty((T, E))
        rewards = np.empty((T, E))
        env_rewards = np.empty((T, E))
        values = np.empty((T, E))
        dones = np.empty((T, E))
        episodes: List[Dict[str, Any]] = []
        self.net.set_norm_mode("running", track=False)
        for t in range(T):
            vec[t], grid[t] = self.obs.vector, self.obs.grid
            mean, log_std, value = self.policy_outputs(self.obs)
            raw[t], act, logp[t] = sample_action(mean, log_std, self.action_rng)
            values[t] = value
            self.obs, rew, done, success, eps = self.env.step(to_physical(act))
            rewards[t] = env_rewards[t] = rew.sum(axis=1)
            if cfg.bootstrap_timeouts:
                # a timeout truncates rather than terminates: credit the value it cut off
                rewards[t] += cfg.gamma * value * (done & ~success)
            dones[t] = done
            episodes.extend(eps)
        bootstrap = self.policy_outputs(self.obs)[2]
        return dict(vec=vec, grid=grid, raw=raw, logp=logp, rewards=rewards, values=values, dones=dones,
                    bootstrap=bootstrap, env_rewards=env_rewards), episodes

    def optimize(self, batch) -> Dict[str, float]:
        cfg = self.config
        adv, ret = compute_advantages(batch["rewards"], batch["values"], batch["dones"], batch["bootstrap"], cfg.gamma)
        N = adv.size
        flat = lambda a: a.reshape((N,) + a.shape[2:])
        vec, grid, raw, logp = flat(batch["vec"]), flat(batch["grid"]), flat(batch["raw"]), flat(batch["logp"])
        adv, ret = adv.reshape(N), ret.reshape(N)
        if cfg.normalize_values:
            self.value_norm.update(ret)
            ret = self.value_norm.normalize(ret)
        if cfg.normalize_advantages:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        stats = {k: [] for k in ("policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction", "grad_norm")}
        aborted = 0
        self.net.set_norm_mode("running", track=True)
        for _ in range(cfg.epochs):
            perm = self.shuffle_rng.permutation(N)
            for s in range(0, N, cfg.minibatch):
                idx = perm[s:s + cfg.minibatch]
                mean, log_std, value = self.net(vec[idx], grid[idx])
                out = clipped_loss(mean, log_std, value, raw[idx], logp[idx], adv[idx], ret[idx],
                                   cfg.clip_eps, cfg.entropy_coef, cfg.value_coef)
                if not math.isfinite(float(out.loss.data)):
                    aborted += 1
                    continue
                self.net.zero_grad()
                out.loss.backward()
                diag = adam_step(self.params, [p.grad for p in self.params], self.adam)
                for k in ("policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction"):
                    stats[k].append(getattr(out, k))
                stats["grad_norm"].append(diag["grad_norm"])
        self.net.set_norm_mode("running", track=False)
        res = {k: float(np.mean(v)) if v else float("nan") for k, v in stats.items()}
        res["aborted"] = aborted
        if cfg.adapt_lr and self.adam.lr > 0 and math.isfinite(res["approx_kl"]):
            self.adam.lr = adaptive_lr(self.adam.lr, res["approx_kl"], cfg.kl_target)
        return res

    def train_iteration(self) -> Dict[str, Any]:
        batch, episodes = self.collect()
        succ = 0
        for ep in episodes:
            curriculum_update(self.curriculum, ep["map"], ep["success"])
            self.rolling.append(bool(ep["success"]))
            succ += ep["success"]
        self.episodes_total += len(episodes)
        opt = self.optimize(batch)
        self.update += 1
        return {
            "update": self.update,
            "lambda": self.curriculum.lambda_per_map,
            "mean_reward": float(batch["env_rewards"].mean()),
            "episodes": len(episodes),
            "episodes_total": self.episodes_total,
            "successes": int(succ),
            "completion_rate": float(np.mean(self.rolling)) if self.rolling else 0.0,
            "rolling_episodes": len(self.rolling),
            "mean_episode_return": float(np.mean([e["return"] for e in episodes])) if episodes else float("nan"),
            "lr": self.adam.lr,
            "skipped_steps": self.adam.skipped,
            **opt,
        }

    def run(self, n_updates: int) -> Iterator[Dict[str, Any]]:
        for _ in range(n_updates):
            yield self.train_iteration()

    # -- exact state capture ---------------------------------------------------------------------
    def get_state(self) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        """(arrays, metadata) sufficient to continue bit-identically."""
        arrays: Dict[str, np.ndarray] = {f"net/{k}": v for k, v in self.net.state_dict().items()}
        for i, (m, v) in enumerate(zip(self.adam.m, self.adam.v)):
            arrays[f"adam/m/{i:03d}"] = m
            arrays[f"adam/v/{i:03d}"] = v
        env = self.env.get_state()
        arrays.update({f"env/{k}": v for k, v in env["arrays"].items()})
        arrays["obs/vector"] = self.obs.vector
        arrays["obs/grid"] = self.obs.grid
        meta = {
            "update": self.update,
            "episodes_total": self.episodes_total,
            "rolling": [bool(x) for x in self.rolling],
            "adam": {"step": self.adam.step, "lr": self.adam.lr, "skipped": self.adam.skipped},
            "curriculum": self.curriculum.to_dict(),
            "value_norm": self.value_norm.to_dict(),
            "rng": {"action": self.action_rng.bit_generator.state, "shuffle": self.shuffle_rng.bit_generator.state,
                    "env": env["rngs"]},
            "bn_fallback_hits": sum(getattr(m, "fallback_hits", 0) for m in self.net.modules()),
        }
        return arrays, meta

    def set_state(self, arrays: Dict[str, np.ndarray], meta: Dict[str, Any]):
        self.net.load_state_dict({k[4:]: v for k, v in arrays.items() if k.startswith("net/")})
        for i in range(len(self.adam.m)):
            self.adam.m[i][...] = arrays[f"adam/m/{i:03d}"]
            self.adam.v[i][...] = arrays[f"adam/v/{i:03d}"]
        self.adam.step = int(meta["adam"]["step"])
        self.adam.lr = float(meta["adam"]["lr"])
        self.adam.skipped = int(meta["adam"]["skipped"])
        self.env.set_state({"arrays": {k[4:]: v for k, v in arrays.items() if k.startswith("env/")},
                            "rngs": meta["rng"]["env"]})
        self.obs = Observation(np.array(arrays["obs/vector"]), np.array(arrays["obs/grid"]))
        self.update = int(meta["update"])
        self.episodes_total = int(meta["episodes_total"])
        self.rolling = deque(meta["rolling"], maxlen=ROLLING_WINDOW)
        cur = CurriculumState.from_dict(meta["curriculum"])
        self.curriculum.levels, self.curriculum.windows = cur.levels, cur.windows
        self.curriculum.window, self.curriculum.threshold, self.curriculum.frozen = cur.window, cur.threshold, cur.frozen
        self.value_norm = RunningMeanStd.from_dict(meta["value_norm"])
        self.action_rng.bit_generator.state = meta["rng"]["action"]
        self.shuffle_rng.bit_generator.state = meta["rng"]["shuffle"]
