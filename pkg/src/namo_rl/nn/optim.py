"""ADAM with decoupled weight decay and global-norm gradient clipping."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .tensor import Tensor


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))


def clip_by_global_norm(grads: Sequence[np.ndarray], max_norm: float) -> tuple[List[np.ndarray], float]:
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        return [g * g.dtype.type(scale) for g in grads], norm
    return list(grads), norm


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    max_norm: float = 1.0
    skipped: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **kw) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params], **kw)


def decays(p: Tensor) -> bool:
    """Weight decay applies to weight matrices and filters only, not to biases or norm scales."""
    return p.data.ndim >= 2


def adam_step(params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], state: AdamState) -> Dict[str, float]:
    """In-place update. Returns diagnostics; a non-finite gradient skips the step entirely."""
    grads = [np.zeros_like(p.data) if g is None else g for p, g in zip(params, grads)]
    for p, g in zip(params, grads):
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape} ({p.name})")
    if not all(np.all(np.isfinite(g)) for g in grads):
        state.skipped += 1
        return {"grad_norm": float("nan"), "skipped": 1.0}
    grads, norm = clip_by_global_norm(grads, state.max_norm)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        dt = p.data.dtype.type
        m *= dt(b1)
        m += dt(1 - b1) * g
        v *= dt(b2)
        v += dt(1 - b2) * g * g
        upd = (m / dt(c1)) / (np.sqrt(v / dt(c2)) + dt(state.eps))
        if state.weight_decay and decays(p):
            upd = upd + dt(state.weight_decay) * p.data
        p.data -= dt(state.lr) * upd
    return {"grad_norm": norm, "skipped": 0.0}
