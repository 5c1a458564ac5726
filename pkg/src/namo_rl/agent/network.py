"""Two-stream actor-critic network: vector MLP + grid CNN, shared trunk, value and mean heads."""
from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

from ..env.observation import GRID_SIZE, VECTOR_SIZE
from ..nn import BatchNorm, Conv2d, LayerNorm, Linear, Module, Tensor, conv_output_size
from ..nn import tensor as F

LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0
ACTION_DIM = 2
HEAD_GAIN = 0.01


class Block(Module):
    """Linear -> ReLU -> LayerNorm."""

    def __init__(self, n_in, n_out, rng, dtype):
        self.fc = Linear(n_in, n_out, rng, dtype=dtype)
        self.norm = LayerNorm(n_out, dtype=dtype)

    def forward(self, x):
        return self.norm(F.relu(self.fc(x)))


class ConvBlock(Module):
    """Conv -> ReLU -> BatchNorm."""

    def __init__(self, c_in, c_out, k, s, rng, dtype):
        self.conv = Conv2d(c_in, c_out, k, s, rng, dtype=dtype)
        self.norm = BatchNorm(c_out, dtype=dtype)

    def forward(self, x):
        return self.norm(F.relu(self.conv(x)))


class PolicyNetwork(Module):
    def __init__(self, seed: int = 0, dtype=np.float32, grid_size: int = GRID_SIZE, vector_size: int = VECTOR_SIZE):
        rng = np.random.default_rng(np.random.SeedSequence([0x9E7, seed]))
        self.dtype = np.dtype(dtype)
        self.grid_size = grid_size
        self.vector_size = vector_size
        self.vec = Block(vector_size, 128, rng, dtype)
        self.conv1 = ConvBlock(1, 16, 8, 4, rng, dtype)
        self.conv2 = ConvBlock(16, 32, 4, 2, rng, dtype)
        side = conv_output_size(conv_output_size(grid_size, 8, 4), 4, 2)
        self.conv_shapes = ((conv_output_size(grid_size, 8, 4),) * 2 + (16,), (side, side, 32))
        self.grid_fc = Block(side * side * 32, 128, rng, dtype)
        self.trunk1 = Block(256, 128, rng, dtype)
        self.trunk2 = Block(128, 64, rng, dtype)
        self.value_head = Linear(64, 1, rng, gain=HEAD_GAIN, dtype=dtype)
        self.mean_head = Linear(64, ACTION_DIM, rng, gain=HEAD_GAIN, dtype=dtype)
        self.log_std = Tensor(np.zeros(ACTION_DIM, dtype=dtype), requires_grad=True, name="log_std")

    def set_norm_mode(self, mode: str, track: bool):
        for m in self.modules():
            if isinstance(m, BatchNorm):
                m.mode = mode
                m.track = track

    def forward(self, vector, grid) -> Tuple[Tensor, Tensor, Tensor]:
        """vector (B, 242), grid (B, 48, 48) -> mean (B, 2), clamped log-std (2,), value (B, 1)."""
        v = F.as_tensor(np.asarray(vector, dtype=self.dtype))
        g = np.asarray(grid, dtype=self.dtype)
        g = F.as_tensor(g.reshape(g.shape + (1,)))
        hv = self.vec(v)
        hg = self.conv2(self.conv1(g))
        hg = self.grid_fc(F.flatten(hg))
        h = self.trunk2(self.trunk1(F.concat([hv, hg], axis=-1)))
        return self.mean_head(h), F.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX), self.value_head(h)

    def feature_shapes(self, batch: int = 1) -> Dict[str, tuple]:
        """Intermediate shapes of the grid stream for a dummy batch."""
        g = F.as_tensor(np.zeros((batch, self.grid_size, self.grid_size, 1), dtype=self.dtype))
        c1 = self.conv1.conv(g)
        c2 = self.conv2.conv(c1)
        return {"conv1": c1.shape[1:], "conv2": c2.shape[1:], "flatten": F.flatten(c2).shape[1:]}

    def state_dict(self) -> Dict[str, np.ndarray]:
        out = {name: p.data for name, p in self.named_parameters()}
        out.update({name: b for name, b in self.named_buffers()})
        return out

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        own = self.state_dict()
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ValueError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, arr in own.items():
            src = np.asarray(state[k])
            if src.shape != arr.shape:
                raise ValueError(f"{k}: shape {src.shape} != {arr.shape}")
            arr[...] = src
