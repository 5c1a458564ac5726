"""Per-map difficulty schedule over lambda."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, Iterable

LEVELS = 5  # lambda = level / LEVELS, so steps of 0.2 up to 1.0
WINDOW = 200
THRESHOLD = 0.9


@dataclass
class CurriculumState:
    """lambda is stored as an integer level to keep it exact across checkpoints."""

    levels: Dict[str, int]
    windows: Dict[str, Deque[bool]] = field(default_factory=dict)
    window: int = WINDOW
    threshold: float = THRESHOLD
    frozen: bool = False

    @classmethod
    def start(cls, map_ids: Iterable[str], lam: float = 0.2, window: int = WINDOW,
              threshold: float = THRESHOLD, frozen: bool = False) -> "CurriculumState":
        level = round(lam * LEVELS)
        if abs(level / LEVELS - lam) > 1e-9 or not 0 <= level <= LEVELS:
            raise ValueError(f"lambda {lam} is not a multiple of {1 / LEVELS}")
        ids = list(map_ids)
        return cls({m: level for m in ids}, {m: deque(maxlen=window) for m in ids}, window, threshold, frozen)

    def lam(self, map_id: str) -> float:
        return self.levels[map_id] / LEVELS

    @property
    def lambda_per_map(self) -> Dict[str, float]:
        return {m: self.lam(m) for m in self.levels}

    def completion_rate(self, map_id: str) -> float:
        w = self.windows[map_id]
        return sum(w) / len(w) if w else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "levels": dict(self.levels),
            "windows": {m: [bool(v) for v in w] for m, w in self.windows.items()},
            "window": self.window,
            "threshold": self.threshold,
            "frozen": self.frozen,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "CurriculumState":
        window = int(d["window"])
        return cls(
            {m: int(v) for m, v in d["levels"].items()},
            {m: deque(w, maxlen=window) for m, w in d["windows"].items()},
            window, float(d["threshold"]), bool(d.get("frozen", False)),
        )


def curriculum_update(state: CurriculumState, map_id: str, episode_success: bool) -> CurriculumState:
    """Record one outcome; advance lambda by one level once a full window clears the threshold."""
    if map_id not in state.levels:
        raise KeyError(f"unknown map {map_id!r}")
    w = state.windows[map_id]
    w.append(bool(episode_success))
    if (not state.frozen and len(w) == state.window and state.levels[map_id] < LEVELS
            and sum(w) >= state.threshold * state.window):
        state.levels[map_id] += 1
        w.clear()
    return state
