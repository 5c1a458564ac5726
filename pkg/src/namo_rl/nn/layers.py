"""Parameterised layers built on the tensor ops."""
from __future__ import annotations

from typing import Dict, Iterator, List, Tuple

import numpy as np

from . import tensor as T
from .tensor import Tensor


def orthogonal(shape: Tuple[int, ...], gain: float, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal init on the (out, fan_in) matricisation."""
    rows, cols = shape[0], int(np.prod(shape[1:]))
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols]).reshape(shape)


class Module:
    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, v in vars(self).items():
            if isinstance(v, Tensor) and v.requires_grad:
                yield prefix + name, v
            elif isinstance(v, Module):
                yield from v.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, v in vars(self).items():
            if isinstance(v, Module):
                yield from v.named_buffers(prefix + name + ".")
        yield from ((prefix + k, v) for k, v in self.buffers().items())

    def buffers(self) -> Dict[str, np.ndarray]:
        return {}

    def modules(self) -> Iterator["Module"]:
        yield self
        for v in vars(self).values():
            if isinstance(v, Module):
                yield from v.modules()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        for m in self.modules():
            for k, v in list(vars(m).items()):
                if isinstance(v, Tensor):
                    v.data = np.ascontiguousarray(v.data, dtype=dtype)
                elif isinstance(v, np.ndarray) and v.dtype.kind == "f":
                    setattr(m, k, v.astype(dtype))
        return self

    def __call__(self, *args, **kw):
        return self.forward(*args, **kw)


def _param(data, name) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = np.sqrt(2.0),
                 dtype=np.float32):
        self.weight = _param(orthogonal((n_out, n_in), gain, rng).astype(dtype), "weight")
        self.bias = _param(np.zeros(n_out, dtype=dtype), "bias")

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, rng: np.random.Generator,
                 gain: float = np.sqrt(2.0), dtype=np.float32):
        self.stride = stride
        self.weight = _param(orthogonal((c_out, kernel, kernel, c_in), gain, rng).astype(dtype), "weight")
        self.bias = _param(np.zeros(c_out, dtype=dtype), "bias")

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, self.stride)


class LayerNorm(Module):
    def __init__(self, n: int, eps: float = 1e-5, dtype=np.float32):
        self.eps = eps
        self.gamma = _param(np.ones(n, dtype=dtype), "gamma")
        self.beta = _param(np.zeros(n, dtype=dtype), "beta")

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class BatchNorm(Module):
    """Per-channel normalisation over all leading axes.

    ``mode``: "batch" normalises with minibatch statistics (gradient flows
    through them); "running" uses the running estimates as constants.
    ``track`` controls whether a forward pass folds the minibatch statistics
    into the running estimates (momentum 0.9). Before the first update the
    running estimates are (0, 1), i.e. identity normalisation, and
    ``fallback_hits`` counts forwards served that way.
    """

    def __init__(self, n: int, momentum: float = 0.9, eps: float = 1e-5, dtype=np.float32):
        self.momentum = momentum
        self.eps = eps
        self.gamma = _param(np.ones(n, dtype=dtype), "gamma")
        self.beta = _param(np.zeros(n, dtype=dtype), "beta")
        self.running_mean = np.zeros(n, dtype=dtype)
        self.running_var = np.ones(n, dtype=dtype)
        self.updates = np.zeros(1, dtype=np.int64)
        self.fallback_hits = 0
        self.mode = "running"
        self.track = False

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var, "updates": self.updates}

    def forward(self, x: Tensor) -> Tensor:
        use_batch = self.mode == "batch"
        if not use_batch and self.updates[0] == 0:
            self.fallback_hits += 1
        y, bm, bv = T.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, use_batch, self.eps)
        if self.track:
            if self.updates[0] == 0:
                self.running_mean[...] = bm
                self.running_var[...] = bv
            else:
                self.running_mean[...] = self.momentum * self.running_mean + (1 - self.momentum) * bm
                self.running_var[...] = self.momentum * self.running_var + (1 - self.momentum) * bv
            self.updates[0] += 1
        return y
