"""Gaussian policy head, n-step advantages, clipped surrogate loss, KL-driven step size."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from ..nn import Tensor
from ..nn import tensor as F
from ..physics import OMEGA_MAX, V_MAX, V_MIN

# the Gaussian lives in normalized action units; physical = u * ACTION_SCALE
ACTION_SCALE = np.array([V_MAX, OMEGA_MAX])
ACTION_LOW = np.array([V_MIN / V_MAX, -1.0])
ACTION_HIGH = np.array([1.0, 1.0])
LOG_2PI = math.log(2.0 * math.pi)
LR_MIN, LR_MAX = 1e-6, 1e-2


def sample_action(mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator,
                  deterministic: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (raw sample, clamped action, log-prob of the raw sample); all in normalized units."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    if deterministic:
        raw = mean.copy()
    else:
        raw = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return raw, np.clip(raw, ACTION_LOW, ACTION_HIGH), gaussian_log_prob_np(raw, mean, log_std)


def to_physical(u: np.ndarray) -> np.ndarray:
    return np.asarray(u) * ACTION_SCALE


def gaussian_log_prob_np(x, mean, log_std) -> np.ndarray:
    z = (x - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def gaussian_log_prob(x: np.ndarray, mean: Tensor, log_std: Tensor) -> Tensor:
    z = (F.as_tensor(x.astype(mean.dtype)) - mean) * F.exp(-log_std)
    return F.tsum(F.square(z) * -0.5 - log_std - 0.5 * LOG_2PI, axis=-1)


def entropy(log_std: Tensor) -> Tensor:
    return F.tsum(log_std + 0.5 * (LOG_2PI + 1.0))


def compute_advantages(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray, bootstrap: np.ndarray,
                       gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    """n-step advantages over a (T, E) rollout.

    ``dones[t]`` marks that the transition at t ended its episode, so nothing
    after it (including the bootstrap value) is credited to t. Returns
    (advantages, return targets R_t = A_t + V(s_t)).
    """
    T = rewards.shape[0]
    ret = np.zeros_like(rewards, dtype=np.float64)
    nxt = np.asarray(bootstrap, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        nxt = rewards[t] + gamma * (1.0 - dones[t]) * nxt
        ret[t] = nxt
    adv = ret - values
    return adv, ret


class RunningMeanStd:
    """Streaming mean/variance of value targets (parallel-merge update)."""

    def __init__(self, eps: float = 1e-4):
        self.mean = 0.0
        self.var = 1.0
        self.count = eps

    def update(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64).ravel()
        n, m, v = x.size, float(x.mean()), float(x.var())
        tot = self.count + n
        delta = m - self.mean
        self.mean += delta * n / tot
        self.var = (self.var * self.count + v * n + delta * delta * self.count * n / tot) / tot
        self.count = tot

    @property
    def std(self) -> float:
        return math.sqrt(self.var + 1e-8)

    def normalize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, x):
        return np.asarray(x, dtype=np.float64) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean, "var": self.var, "count": self.count}

    @classmethod
    def from_dict(cls, d):
        r = cls()
        r.mean, r.var, r.count = float(d["mean"]), float(d["var"]), float(d["count"])
        return r


def surrogate(ratio, adv, eps: float):
    """Per-sample min(r A, clip(r, 1-eps, 1+eps) A) on plain arrays."""
    return np.minimum(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv)


@dataclass
class LossOutput:
    loss: Tensor
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float


def clipped_loss(mean: Tensor, log_std: Tensor, value: Tensor, actions: np.ndarray, old_log_prob: np.ndarray,
                 advantages: np.ndarray, returns: np.ndarray, clip_eps: float = 0.2, entropy_coef: float = 0.01,
                 value_coef: float = 0.5) -> LossOutput:
    """-L_clip - c_H H + c_V MSE(V, R)."""
    dt = mean.dtype
    logp = gaussian_log_prob(actions, mean, log_std)
    log_ratio = logp - F.as_tensor(old_log_prob.astype(dt))
    ratio = F.exp(log_ratio)
    adv = F.as_tensor(advantages.astype(dt))
    surr = F.minimum(ratio * adv, F.clip(ratio, 1 - clip_eps, 1 + clip_eps) * adv)
    pol = -F.mean(surr)
    ent = entropy(log_std)
    vloss = F.mean(F.square(F.reshape(value, (-1,)) - F.as_tensor(returns.astype(dt))))
    loss = pol - ent * entropy_coef + vloss * value_coef
    r = ratio.data
    return LossOutput(
        loss=loss,
        policy_loss=float(pol.data),
        value_loss=float(vloss.data),
        entropy=float(ent.data),
        approx_kl=float(np.mean(-log_ratio.data)),
        clip_fraction=float(np.mean(np.abs(r - 1.0) > clip_eps)),
    )


def adaptive_lr(lr: float, approx_kl: float, kl_target: float, factor: float = 1.5) -> float:
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    if approx_kl > 2.0 * kl_target:
        lr = lr / factor
    elif approx_kl < 0.5 * kl_target:
        lr = lr * factor
    return float(min(max(lr, LR_MIN), LR_MAX))
