"""Run configuration documents (YAML or JSON) with field-level diagnostics."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .agent.trainer import TrainConfig
from .env import NoiseConfig
from .evalbench import EvalConfig
from .scenegen import MAP_IDS, SpawnConfig

MODES = ("train", "eval", "render", "inspect-map", "selftest")


class ConfigError(ValueError):
    """Carries every problem found, each as (field path, message)."""

    def __init__(self, errors: List[Tuple[str, str]]):
        self.errors = list(errors)
        super().__init__("\n".join(f"{p}: {m}" for p, m in self.errors))


@dataclass(frozen=True)
class CurriculumConfig:
    window: int = 200
    threshold: float = 0.9
    fixed_lambda: bool = False


@dataclass(frozen=True)
class RunConfig:
    mode: str = "train"
    maps: Tuple[str, ...] = ("c",)
    seed: int = 0
    out: str = "runs/default"
    checkpoint: Optional[str] = None
    checkpoint_every: int = 50
    spawn: SpawnConfig = SpawnConfig()
    curriculum: CurriculumConfig = CurriculumConfig()
    noise: NoiseConfig = NoiseConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()

    def to_document(self) -> Dict[str, Any]:
        return json.loads(json.dumps(dataclasses.asdict(self), default=list))


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _unit(v):
    return None if 0.0 <= v <= 1.0 else "must lie in [0, 1]"


_SECTIONS = {"spawn": SpawnConfig, "curriculum": CurriculumConfig, "noise": NoiseConfig, "train": TrainConfig,
             "eval": EvalConfig}

# dotted path -> range check returning an error message or None
_CHECKS = {
    "seed": _nonneg, "checkpoint_every": _positive,
    "spawn.lam": _unit, "spawn.robot_anywhere_prob": _unit, "spawn.max_boxes": _nonneg,
    "curriculum.window": _positive, "curriculum.threshold": _unit,
    "noise.sigma_vector": _nonneg, "noise.sigma_grid": _nonneg, "noise.sigma_action": _nonneg,
    "train.gamma": lambda v: None if 0 < v <= 1 else "must lie in (0, 1]",
    "train.clip_eps": _positive, "train.lr": _positive, "train.kl_target": _positive,
    "train.entropy_coef": _nonneg, "train.value_coef": _nonneg, "train.max_norm": _positive,
    "train.weight_decay": _nonneg, "train.horizon": _positive, "train.minibatch": _positive,
    "train.epochs": _positive, "train.n_envs": _positive, "train.updates": _nonneg,
    "eval.lambdas": _unit, "spawn.p": lambda v: None if 0.2 <= v <= 0.6 else "must lie in [0.2, 0.6]",
    "eval.scenes": _positive, "eval.n_envs": _positive, "eval.seed": _nonneg,
}


def _coerce(value, default, path, errors):
    """Match the default's type: bools stay bools, ints accept integral floats, tuples accept lists."""
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        errors.append((path, f"expected true/false, got {value!r}"))
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        errors.append((path, f"expected an integer, got {value!r}"))
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            if math.isfinite(value):
                return float(value)
            errors.append((path, "must be finite"))
        else:
            errors.append((path, f"expected a number, got {value!r}"))
    elif isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            errors.append((path, f"expected a list, got {value!r}"))
            return None
        proto = default[0] if default else value[0] if value else None
        out = []
        for i, v in enumerate(value):
            c = _coerce(v, proto, f"{path}[{i}]", errors) if proto is not None else v
            out.append(c)
        return tuple(out)
    elif isinstance(default, str) or default is None:
        if value is None and default is None:
            return None
        if isinstance(value, str):
            return value
        errors.append((path, f"expected a string, got {value!r}"))
    else:
        errors.append((path, f"unsupported value {value!r}"))
    return None


def _section(cls, doc, prefix, errors):
    if not isinstance(doc, dict):
        errors.append((prefix, f"expected a mapping, got {type(doc).__name__}"))
        return cls()
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in doc.items():
        path = f"{prefix}.{key}"
        if key not in names:
            errors.append((path, f"unknown key (allowed: {', '.join(sorted(names))})"))
            continue
        default = getattr(defaults, key)
        if dataclasses.is_dataclass(default):
            errors.append((path, "nested sections are not allowed here"))
            continue
        v = _coerce(value, default, path, errors)
        if v is None and default is not None:
            continue
        check = _CHECKS.get(path)
        if check is not None:
            items = enumerate(v) if isinstance(v, tuple) else [(None, v)]
            bad = [(path if i is None else f"{path}[{i}]", check(x)) for i, x in items if x is not None and check(x)]
            if bad:
                errors.extend(bad)
                continue
        kwargs[key] = v
    n_before = len(errors)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        if len(errors) == n_before:
            errors.append((prefix, str(exc)))
        return defaults


def parse_config(doc: Any, base_dir: Optional[Path] = None) -> RunConfig:
    """Validate a run document; raises ConfigError listing every bad field."""
    errors: List[Tuple[str, str]] = []
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError([("<root>", f"expected a mapping, got {type(doc).__name__}")])
    defaults = RunConfig()
    allowed = {f.name for f in dataclasses.fields(RunConfig)}
    kwargs: Dict[str, Any] = {}
    for key, value in doc.items():
        if key not in allowed:
            errors.append((key, f"unknown key (allowed: {', '.join(sorted(allowed))})"))
        elif key in _SECTIONS:
            kwargs[key] = _section(_SECTIONS[key], value, key, errors)
        else:
            v = _coerce(value, getattr(defaults, key), key, errors)
            check = _CHECKS.get(key)
            if v is not None and check is not None and check(v):
                errors.append((key, check(v)))
            elif v is not None or key == "checkpoint":
                kwargs[key] = v
    mode = kwargs.get("mode", defaults.mode)
    if mode not in MODES:
        errors.append(("mode", f"must be one of {', '.join(MODES)}"))
    for i, m in enumerate(kwargs.get("maps", defaults.maps)):
        if m is not None and m not in MAP_IDS and not _resolve(m, base_dir).exists():
            errors.append((f"maps[{i}]", f"unknown map id or missing file {m!r}"))
    if "maps" in kwargs and not kwargs["maps"]:
        errors.append(("maps", "at least one map is required"))
    ck = kwargs.get("checkpoint")
    if ck is not None and mode in ("eval",) and not _resolve(ck, base_dir).exists():
        errors.append(("checkpoint", f"file not found: {ck}"))
    if errors:
        raise ConfigError(errors)
    return RunConfig(**kwargs)


def _resolve(p: str, base_dir: Optional[Path]) -> Path:
    path = Path(p)
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    return path


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([("<file>", f"cannot read {path}: {exc.strerror}")]) from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "<root>"
        raise ConfigError([(where, f"not valid YAML/JSON: {getattr(exc, 'problem', exc)}")]) from None
    return parse_config(doc, base_dir=path.parent)


def replace(cfg: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(cfg, **changes)
