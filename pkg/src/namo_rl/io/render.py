"""Top-down PNG frames of a logged episode."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

from ..env.observation import GOAL_RADIUS
from ..physics import BOX_HALF_EXTENTS, ROBOT_HALF_EXTENTS

SIZE = 512
BACKGROUND = (250, 250, 250)
WALL = (40, 40, 40)
BOX = (255, 191, 0)
BOX_EDGE = (150, 100, 0)
BOX_GHOST = (255, 228, 160)
ROBOT = (128, 128, 128)
ROBOT_EDGE = (60, 60, 60)
HEADING = (20, 20, 20)
GOAL = (40, 170, 60)
TRAIL = (185, 185, 185)


class View:
    def __init__(self, bounds: Sequence[float], size: int = SIZE):
        self.x0, self.y0, self.x1, self.y1 = bounds
        self.size = size
        self.scale = size / max(self.x1 - self.x0, self.y1 - self.y0)

    def px(self, x: float, y: float) -> Tuple[float, float]:
        return ((x - self.x0) * self.scale, (self.y1 - y) * self.scale)


def rect_corners(x, y, th, hx, hy) -> List[Tuple[float, float]]:
    c, s = math.cos(th), math.sin(th)
    return [(x + c * lx - s * ly, y + s * lx + c * ly) for lx, ly in ((hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy))]


def _poly(draw, view, corners, fill, outline):
    draw.polygon([view.px(*p) for p in corners], fill=fill, outline=outline)


def draw_scene(header: Dict[str, Any], robot: Sequence[float], boxes: Sequence[Optional[Sequence[float]]],
               trail: Sequence[Sequence[float]] = (), ghosts: Sequence[Optional[Sequence[float]]] = (),
               size: int = SIZE) -> Image.Image:
    view = View(header["bounds"], size)
    img = Image.new("RGB", (size, size), BACKGROUND)
    d = ImageDraw.Draw(img)
    gx, gy = header["goal"]
    r = GOAL_RADIUS * view.scale
    cx, cy = view.px(gx, gy)
    d.ellipse([cx - r, cy - r, cx + r, cy + r], fill=GOAL)
    width = max(1, int(round(header.get("wall_thickness", 0.1) * view.scale)))
    for x1, y1, x2, y2 in header["walls"]:
        d.line([view.px(x1, y1), view.px(x2, y2)], fill=WALL, width=width)
    for b in ghosts:
        if b is not None:
            _poly(d, view, rect_corners(*b, *BOX_HALF_EXTENTS), None, BOX_GHOST)
    for p in trail:
        tx, ty = view.px(p[0], p[1])
        d.ellipse([tx - 2, ty - 2, tx + 2, ty + 2], fill=TRAIL)
    for b in boxes:
        if b is not None:
            _poly(d, view, rect_corners(*b, *BOX_HALF_EXTENTS), BOX, BOX_EDGE)
    x, y, th = robot
    _poly(d, view, rect_corners(x, y, th, *ROBOT_HALF_EXTENTS), ROBOT, ROBOT_EDGE)
    nose = (x + ROBOT_HALF_EXTENTS[0] * math.cos(th), y + ROBOT_HALF_EXTENTS[0] * math.sin(th))
    d.line([view.px(x, y), view.px(*nose)], fill=HEADING, width=2)
    return img


def render_trajectory(header: Dict[str, Any], records: Sequence[Dict[str, Any]], out_dir,
                      size: int = SIZE) -> List[Path]:
    """frame_0000.png is the initial state, then one frame per step, then summary.png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    init = header["initial"]
    states = [(init["robot"], init["boxes"])] + [(r["robot"], r["boxes"]) for r in records]
    paths = []
    for k, (robot, boxes) in enumerate(states):
        img = draw_scene(header, robot, boxes, trail=[s[0] for s in states[:k]], size=size)
        p = out / f"frame_{k:04d}.png"
        img.save(p, format="PNG", optimize=False)
        paths.append(p)
    last_robot, last_boxes = states[-1]
    summary = draw_scene(header, last_robot, last_boxes, trail=[s[0] for s in states[:-1]],
                         ghosts=init["boxes"], size=size)
    p = out / "summary.png"
    summary.save(p, format="PNG", optimize=False)
    paths.append(p)
    return paths


def box_pixel_centroid(img: Image.Image) -> Optional[Tuple[float, float]]:
    """Mean pixel position of box-fill pixels (used to compare frames to logged poses)."""
    a = np.asarray(img)
    mask = np.all(a == np.array(BOX, dtype=a.dtype), axis=-1)
    if not mask.any():
        return None
    ys, xs = np.nonzero(mask)
    return float(xs.mean()), float(ys.mean())
