"""Trajectory logs as JSON lines: one header record, then one record per policy step."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple

TRAJECTORY_VERSION = 1
_STEP_KEYS = ("t", "robot", "boxes", "action_target", "action_actual", "reward", "contacts", "status")


class TrajectoryError(ValueError):
    pass


def write_trajectory(path, header: Dict[str, Any], records: Iterable[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(json.dumps({"kind": "header", "version": TRAJECTORY_VERSION, **header}, sort_keys=True) + "\n")
        for r in records:
            f.write(json.dumps({"kind": "step", **r}, sort_keys=True) + "\n")
    return path


def read_trajectory(path) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    """Validates ordering and required keys; errors name the first bad line."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise TrajectoryError(f"{path}: empty log")
    try:
        header = json.loads(lines[0])
    except ValueError:
        raise TrajectoryError(f"{path}:1: header is not valid JSON") from None
    if header.get("kind") != "header":
        raise TrajectoryError(f"{path}:1: first record must be the header")
    for key in ("map", "goal", "walls", "bounds"):
        if key not in header:
            raise TrajectoryError(f"{path}:1: header missing '{key}'")
    records = []
    last_t = float("-inf")
    for n, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except ValueError:
            raise TrajectoryError(f"{path}:{n}: not valid JSON") from None
        missing = [k for k in _STEP_KEYS if k not in rec]
        if missing:
            raise TrajectoryError(f"{path}:{n}: step record missing {missing}")
        if not rec["t"] > last_t:
            raise TrajectoryError(f"{path}:{n}: time {rec['t']} not after {last_t}")
        last_t = rec["t"]
        records.append(rec)
    return header, records
