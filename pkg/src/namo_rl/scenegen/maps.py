"""Room layouts: schema validation, occupancy rasterisation and connectivity."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from os import PathLike
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from ..physics import ROBOT_HALF_EXTENTS, WALL_THICKNESS, Pose2D, walls_array
from ..physics import kernels as K

MAP_IDS = tuple("abcdefghi")
TRAIN_MAP_IDS = tuple("abcdefgh")
HELD_OUT_MAP_ID = "i"
MAX_WALLS = 12
PASSAGE_WIDTH_RANGE = (1.0, 2.0)
CONNECTIVITY_RESOLUTION = 0.05

_KEYS = {"id", "family", "bounds", "wall_thickness", "walls", "robot_spawn", "goal_spawn",
         "challenging_poses", "passages"}
_REQUIRED = _KEYS - {"family", "wall_thickness"}


class MapValidationError(ValueError):
    """Raised with one ``(field_path, message)`` entry per problem found."""

    def __init__(self, errors: List[Tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


Rect = Tuple[float, float, float, float]


@dataclass(frozen=True)
class MapLayout:
    id: str
    walls: np.ndarray
    room_bounds: Rect
    robot_spawn_region: Rect
    goal_spawn_region: Rect
    challenging_poses: Tuple[Tuple[Pose2D, float], ...]
    passage_descriptors: Tuple[Tuple[float, float, float], ...]
    wall_thickness: float = WALL_THICKNESS
    family: str = ""

    @property
    def center(self) -> np.ndarray:
        x0, y0, x1, y1 = self.room_bounds
        return np.array([(x0 + x1) / 2, (y0 + y1) / 2])

    @property
    def half_size(self) -> np.ndarray:
        x0, y0, x1, y1 = self.room_bounds
        return np.array([(x1 - x0) / 2, (y1 - y0) / 2])

    @property
    def diagonal(self) -> float:
        x0, y0, x1, y1 = self.room_bounds
        return math.hypot(x1 - x0, y1 - y0)

    def walls_array(self, capacity: int = MAX_WALLS) -> np.ndarray:
        return walls_array(self.walls.tolist(), self.wall_thickness, capacity)

    def to_document(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "family": self.family,
            "bounds": list(self.room_bounds),
            "wall_thickness": self.wall_thickness,
            "walls": self.walls.tolist(),
            "robot_spawn": list(self.robot_spawn_region),
            "goal_spawn": list(self.goal_spawn_region),
            "challenging_poses": [[p.x, p.y, p.theta, r] for p, r in self.challenging_poses],
            "passages": [list(p) for p in self.passage_descriptors],
        }


def _numbers(value, n, path, errors) -> Optional[List[float]]:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        errors.append((path, f"expected a list of {n} numbers"))
        return None
    out = []
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            errors.append((f"{path}[{i}]", f"expected a finite number, got {v!r}"))
            return None
        out.append(float(v))
    return out


def _rect(value, path, errors, bounds=None) -> Optional[Rect]:
    r = _numbers(value, 4, path, errors)
    if r is None:
        return None
    if not (r[0] < r[2] and r[1] < r[3]):
        errors.append((path, "expected [xmin, ymin, xmax, ymax] with min < max"))
        return None
    if bounds is not None and not (bounds[0] <= r[0] and bounds[1] <= r[1] and r[2] <= bounds[2] and r[3] <= bounds[3]):
        errors.append((path, "region lies outside bounds"))
    return tuple(r)


def _read_document(source) -> Dict[str, Any]:
    if isinstance(source, dict):
        return source
    if isinstance(source, (str, PathLike)):
        text = str(source)
        # a path is a single line; documents are JSON objects or multi-line YAML
        if isinstance(source, PathLike) or ("\n" not in text and not text.lstrip().startswith("{")):
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise MapValidationError([("<document>", f"cannot read {source}: {exc.strerror}")]) from None
        import yaml

        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise MapValidationError([("<document>", f"unparseable: {exc}")]) from None
        if not isinstance(doc, dict):
            raise MapValidationError([("<document>", "expected a mapping at top level")])
        return doc
    raise TypeError(f"unsupported map source {type(source).__name__}")


def load_map(source: Union[str, PathLike, Dict[str, Any]], check_connectivity: bool = True) -> MapLayout:
    """Parse and validate a map document (path, JSON/YAML text or dict)."""
    doc = _read_document(source)
    errors: List[Tuple[str, str]] = []
    for key in sorted(set(doc) - _KEYS):
        errors.append((key, "unknown key"))
    for key in sorted(_REQUIRED - set(doc)):
        errors.append((key, "missing required key"))
    if errors:
        raise MapValidationError(errors)

    map_id = doc["id"]
    if not isinstance(map_id, str) or not map_id:
        errors.append(("id", "expected a non-empty string"))
    family = doc.get("family", "")
    if not isinstance(family, str):
        errors.append(("family", "expected a string"))
    thickness = doc.get("wall_thickness", WALL_THICKNESS)
    if isinstance(thickness, bool) or not isinstance(thickness, (int, float)) or not thickness > 0:
        errors.append(("wall_thickness", "expected a positive number"))
        thickness = WALL_THICKNESS
    bounds = _rect(doc["bounds"], "bounds", errors)

    walls = []
    if not isinstance(doc["walls"], list) or not doc["walls"]:
        errors.append(("walls", "expected a non-empty list of [x1, y1, x2, y2]"))
    else:
        if len(doc["walls"]) > MAX_WALLS:
            errors.append(("walls", f"at most {MAX_WALLS} segments supported"))
        for i, w in enumerate(doc["walls"]):
            seg = _numbers(w, 4, f"walls[{i}]", errors)
            if seg is None:
                continue
            if math.hypot(seg[2] - seg[0], seg[3] - seg[1]) <= 0:
                errors.append((f"walls[{i}]", "zero-length segment"))
                continue
            walls.append(seg)

    robot_region = _rect(doc["robot_spawn"], "robot_spawn", errors, bounds)
    goal_region = _rect(doc["goal_spawn"], "goal_spawn", errors, bounds)

    poses = []
    if not isinstance(doc["challenging_poses"], list):
        errors.append(("challenging_poses", "expected a list of [x, y, theta, radius]"))
    else:
        for i, p in enumerate(doc["challenging_poses"]):
            v = _numbers(p, 4, f"challenging_poses[{i}]", errors)
            if v is None:
                continue
            if v[3] < 0:
                errors.append((f"challenging_poses[{i}].radius", "must be >= 0"))
            if bounds is not None and not (bounds[0] <= v[0] <= bounds[2] and bounds[1] <= v[1] <= bounds[3]):
                errors.append((f"challenging_poses[{i}]", "pose lies outside bounds"))
            poses.append((Pose2D(v[0], v[1], v[2]), v[3]))

    passages = []
    if not isinstance(doc["passages"], list) or not doc["passages"]:
        errors.append(("passages", "expected a non-empty list of [cx, cy, width]"))
    else:
        lo, hi = PASSAGE_WIDTH_RANGE
        for i, p in enumerate(doc["passages"]):
            v = _numbers(p, 3, f"passages[{i}]", errors)
            if v is None:
                continue
            if not lo <= v[2] <= hi:
                errors.append((f"passages[{i}].width", f"{v[2]} outside [{lo}, {hi}] m"))
            passages.append(tuple(v))
    if errors:
        raise MapValidationError(errors)

    layout = MapLayout(
        id=map_id, walls=np.array(walls, dtype=float), room_bounds=bounds, robot_spawn_region=robot_region,
        goal_spawn_region=goal_region, challenging_poses=tuple(poses), passage_descriptors=tuple(passages),
        wall_thickness=float(thickness), family=family,
    )
    if check_connectivity:
        if not regions_connected(layout):
            raise MapValidationError([("walls", "robot and goal spawn regions are disconnected with no boxes present")])
        if regions_connected(layout, plug_passages=True):
            raise MapValidationError([("passages", "spawn regions are not separated by the listed passages")])
    return layout


def builtin_map_path(map_id: str) -> Path:
    if map_id not in MAP_IDS:
        raise KeyError(f"unknown map {map_id!r}; shipped maps are {', '.join(MAP_IDS)}")
    return Path(str(resources.files(__package__).joinpath("maps").joinpath(f"{map_id}.json")))


_CACHE: Dict[str, MapLayout] = {}


def get_map(map_id: str) -> MapLayout:
    """Shipped map by id (cached), or a map document path."""
    if map_id not in _CACHE:
        path = builtin_map_path(map_id) if map_id in MAP_IDS else Path(map_id)
        _CACHE[map_id] = load_map(path)
    return _CACHE[map_id]


def cell_centers(bounds: Rect, resolution: float) -> Tuple[np.ndarray, np.ndarray]:
    """Cell-centre coordinate grids ``(xs, ys)`` of shape (ny, nx); row 0 is the lowest y."""
    x0, y0, x1, y1 = bounds
    nx = int(round((x1 - x0) / resolution))
    ny = int(round((y1 - y0) / resolution))
    xs = x0 + (np.arange(nx) + 0.5) * resolution
    ys = y0 + (np.arange(ny) + 0.5) * resolution
    return np.meshgrid(xs, ys)


def segment_distance(px: np.ndarray, py: np.ndarray, seg: Sequence[float]) -> np.ndarray:
    x1, y1, x2, y2 = seg[:4]
    ex, ey = x2 - x1, y2 - y1
    ll = ex * ex + ey * ey
    t = np.clip(((px - x1) * ex + (py - y1) * ey) / ll, 0.0, 1.0) if ll > 0 else np.zeros_like(px)
    return np.hypot(px - (x1 + t * ex), py - (y1 + t * ey))


def rect_mask(px: np.ndarray, py: np.ndarray, row: np.ndarray, inflate: float = 0.0) -> np.ndarray:
    """Points covered by a body row (inclusive of the boundary)."""
    c, s = math.cos(row[K.BTH]), math.sin(row[K.BTH])
    dx, dy = px - row[K.BX], py - row[K.BY]
    qx = c * dx + s * dy
    qy = -s * dx + c * dy
    return (np.abs(qx) <= row[K.BHX] + inflate) & (np.abs(qy) <= row[K.BHY] + inflate)


def occupancy(bounds: Rect, resolution: float, walls: np.ndarray, thickness: float,
              boxes: Optional[np.ndarray] = None, inflate: float = 0.0) -> np.ndarray:
    """Boolean blocked-cell grid from wall segments (and optionally box rows)."""
    xs, ys = cell_centers(bounds, resolution)
    blocked = np.zeros(xs.shape, dtype=bool)
    for seg in walls:
        blocked |= segment_distance(xs, ys, seg) <= thickness / 2 + inflate
    if boxes is not None:
        for row in boxes:
            if row[K.BACTIVE]:
                blocked |= rect_mask(xs, ys, row, inflate)
    return blocked


def _region_mask(bounds: Rect, resolution: float, region: Rect) -> np.ndarray:
    xs, ys = cell_centers(bounds, resolution)
    return (xs >= region[0]) & (xs <= region[2]) & (ys >= region[1]) & (ys <= region[3])


def free_path_exists(blocked: np.ndarray, start_mask: np.ndarray, goal_mask: np.ndarray) -> bool:
    """4-connected flood fill: does any free start cell reach any free goal cell?"""
    labels, _ = ndimage.label(~blocked)
    a = set(np.unique(labels[start_mask & ~blocked])) - {0}
    b = set(np.unique(labels[goal_mask & ~blocked])) - {0}
    return bool(a & b)


def regions_connected(layout: MapLayout, boxes: Optional[np.ndarray] = None, plug_passages: bool = False,
                      resolution: float = CONNECTIVITY_RESOLUTION) -> bool:
    inflate = ROBOT_HALF_EXTENTS[1]
    blocked = occupancy(layout.room_bounds, resolution, layout.walls, layout.wall_thickness, boxes, inflate)
    if plug_passages:
        xs, ys = cell_centers(layout.room_bounds, resolution)
        for cx, cy, w in layout.passage_descriptors:
            blocked |= np.hypot(xs - cx, ys - cy) <= w / 2 + inflate + resolution
    return free_path_exists(blocked, _region_mask(layout.room_bounds, resolution, layout.robot_spawn_region),
                            _region_mask(layout.room_bounds, resolution, layout.goal_spawn_region))


def point_connected(layout: MapLayout, start: Sequence[float], goal: Sequence[float],
                    boxes: Optional[np.ndarray] = None, resolution: float = CONNECTIVITY_RESOLUTION) -> bool:
    """Flood fill from a point to a point, walls and boxes inflated by the robot half-width."""
    inflate = ROBOT_HALF_EXTENTS[1]
    blocked = occupancy(layout.room_bounds, resolution, layout.walls, layout.wall_thickness, boxes, inflate)
    xs, ys = cell_centers(layout.room_bounds, resolution)

    def near(p):
        d = np.hypot(xs - p[0], ys - p[1])
        # the robot centre may sit in an inflated cell when touching something
        return d <= max(resolution, ROBOT_HALF_EXTENTS[1] + resolution)

    return free_path_exists(blocked, near(start), near(goal))


def dump_document(doc: Dict[str, Any]) -> str:
    return json.dumps(doc, indent=2)
