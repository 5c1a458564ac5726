"""Define-by-run reverse-mode autodiff over numpy arrays.

Every op returns a Tensor holding a backward closure and its inputs; calling
``backward()`` on a scalar walks the graph once in reverse topological order.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "op", "name")

    def __init__(self, data, requires_grad: bool = False, parents: Tuple["Tensor", ...] = (),
                 backward_fn: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
                 op: str = "leaf", name: str = ""):
        self.data = np.asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.op = op
        self.name = name

    shape = property(lambda self: self.data.shape)
    dtype = property(lambda self: self.data.dtype)
    ndim = property(lambda self: self.data.ndim)

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape}, dtype={self.dtype})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad: Optional[np.ndarray] = None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: List[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.backward_fn is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not p.requires_grad:
                    continue
                grads[id(p)] = pg if id(p) not in grads else grads[id(p)] + pg

    # operator sugar
    def __add__(self, o): return add(self, o)
    __radd__ = __add__
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    __rmul__ = __mul__
    def __neg__(self): return mul(self, -1.0)
    def __truediv__(self, o): return mul(self, reciprocal(o) if isinstance(o, Tensor) else 1.0 / o)
    def __getitem__(self, idx): return index(self, idx)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data, parents, fn, op) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, req, parents if req else (), fn if req else None, op)


# piecewise ops report which branch each element took so gradient checks can avoid kinks
_KINK_LOG: Optional[List[np.ndarray]] = None


@contextmanager
def record_kinks():
    global _KINK_LOG
    prev, _KINK_LOG = _KINK_LOG, []
    try:
        yield _KINK_LOG
    finally:
        _KINK_LOG = prev


def _log_branch(mask: np.ndarray):
    if _KINK_LOG is not None:
        _KINK_LOG.append(np.packbits(mask.ravel()))


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _pair(a, b) -> Tuple[Tensor, Tensor]:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.dtype if isinstance(b, Tensor) else None))
    b = b if isinstance(b, Tensor) else Tensor(np.asarray(b, dtype=a.dtype))
    return a, b


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _node(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def reciprocal(a: Tensor) -> Tensor:
    y = 1.0 / a.data
    return _node(y, (a,), lambda g: (-g * y * y,), "reciprocal")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _node(y, (a,), lambda g: (g * y,), "exp")


def square(a: Tensor) -> Tensor:
    return _node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)

    return _node(y, (a,), fn, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def flatten(a: Tensor) -> Tensor:
    return reshape(a, (a.shape[0], -1))


def index(a: Tensor, idx) -> Tensor:
    def fn(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], (a,), fn, "index")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    return _node(np.concatenate([x.data for x in xs], axis=axis), tuple(xs),
                 lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    _log_branch(mask)
    return _node(np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,), "relu")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp; gradient passes only where the input lies strictly inside (lo, hi)."""
    inside = (a.data > lo) & (a.data < hi)
    _log_branch(inside)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def minimum(a, b) -> Tensor:
    a, b = _pair(a, b)
    take_a = a.data <= b.data
    _log_branch(take_a)
    return _node(np.where(take_a, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)), "minimum")


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """y = x W^T + b with W of shape (out, in)."""
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight in-features {w.shape[1]}")
    y = x.data @ w.data.T
    if b is not None:
        y = y + b.data

    def fn(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ w.data if x.requires_grad else None
        gw = g2.T @ x.data.reshape(-1, x.shape[-1])
        gb = g2.sum(axis=0) if b is not None else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    return _node(y, (x, w, b) if b is not None else (x, w), fn, "linear")


def conv_output_size(n: int, k: int, s: int) -> int:
    if n < k:
        raise ShapeError(f"input side {n} is smaller than kernel {k}")
    return (n - k) // s + 1


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor], stride: int = 1) -> Tensor:
    """Valid cross-correlation. x: (B, H, W, C) channels-last; w: (K, k, k, C); b: (K,)."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects (B,H,W,C) input and (K,k,k,C) filters, got {x.shape} and {w.shape}")
    B, H, W, C = x.shape
    K, kh, kw, Cw = w.shape
    if C != Cw:
        raise ShapeError(f"conv2d: input has {C} channels, filters expect {Cw}")
    if H < kh or W < kw:
        raise ShapeError(f"conv2d: input {H}x{W} smaller than kernel {kh}x{kw}")
    Ho, Wo = conv_output_size(H, kh, stride), conv_output_size(W, kw, stride)
    win = sliding_window_view(x.data, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]  # B,Ho,Wo,C,kh,kw
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B * Ho * Wo, kh * kw * C)
    wmat = w.data.reshape(K, -1)
    y = cols @ wmat.T
    if b is not None:
        y = y + b.data
    y = y.reshape(B, Ho, Wo, K)

    def fn(g):
        g2 = g.reshape(-1, K)
        gw = (g2.T @ cols).reshape(w.shape)
        gb = g2.sum(axis=0) if b is not None else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat).reshape(B, Ho, Wo, kh, kw, C)
            gx = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    gx[:, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride, :] += gcols[:, :, :, i, j, :]
        return (gx, gw, gb) if b is not None else (gx, gw)

    return _node(y, (x, w, b) if b is not None else (x, w), fn, "conv2d")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xh = xc * inv
    y = xh * gamma.data + beta.data

    def fn(g):
        gxh = g * gamma.data
        n = x.shape[-1]
        gx = inv / n * (n * gxh - gxh.sum(-1, keepdims=True) - xh * (gxh * xh).sum(-1, keepdims=True))
        red = tuple(range(g.ndim - 1))
        return gx, (g * xh).sum(axis=red), g.sum(axis=red)

    return _node(y.astype(x.dtype), (x, gamma, beta), fn, "layer_norm")


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, mean_: np.ndarray, var_: np.ndarray,
               use_batch_stats: bool, eps: float = 1e-5) -> Tuple[Tensor, np.ndarray, np.ndarray]:
    """Normalise over every axis but the last. Returns (y, batch_mean, batch_var).

    With ``use_batch_stats`` the statistics are part of the graph; otherwise the
    supplied running ``mean_``/``var_`` act as constants.
    """
    red = tuple(range(x.ndim - 1))
    m = int(np.prod([x.shape[i] for i in red]))
    bmean = x.data.mean(axis=red)
    xc_b = x.data - bmean
    bvar = (xc_b * xc_b).mean(axis=red)
    if use_batch_stats:
        if x.shape[0] < 2:
            raise ShapeError("batch_norm with batch statistics needs batch >= 2")
        inv = 1.0 / np.sqrt(bvar + eps)
        xh = xc_b * inv
    else:
        inv = 1.0 / np.sqrt(var_ + eps)
        xh = (x.data - mean_) * inv
    y = (xh * gamma.data + beta.data).astype(x.dtype)

    def fn(g):
        gxh = g * gamma.data
        if use_batch_stats:
            gx = inv / m * (m * gxh - gxh.sum(axis=red) - xh * (gxh * xh).sum(axis=red))
        else:
            gx = gxh * inv
        return gx.astype(x.dtype), (g * xh).sum(axis=red), g.sum(axis=red)

    return _node(y, (x, gamma, beta), fn, "batch_norm"), bmean, bvar
