"""Axis-aligned rectangle arithmetic.

Coordinates are continuous pixel positions with the origin at the top-left
corner of the image, x growing rightward and y growing downward. Nothing in
this module rounds; integer pixel counts only appear once a crop plan is
materialized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class Box:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max >= self.x_min and self.y_max >= self.y_min):
            raise ValueError(f"invalid box {self.as_tuple()}: max edge below min edge")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center_x(self) -> float:
        return 0.5 * (self.x_min + self.x_max)

    @property
    def center_y(self) -> float:
        return 0.5 * (self.y_min + self.y_max)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def contains(self, other: "Box", tol: float = 0.0) -> bool:
        """True when ``other`` lies inside this box (edges may touch)."""
        return (
            other.x_min >= self.x_min - tol
            and other.y_min >= self.y_min - tol
            and other.x_max <= self.x_max + tol
            and other.y_max <= self.y_max + tol
        )


@dataclass(frozen=True)
class ImageMeta:
    image_id: str
    width_px: int
    height_px: int

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError(f"image {self.image_id!r} must have positive size")

    @property
    def n_pixels(self) -> int:
        return self.width_px * self.height_px

    @property
    def bounds(self) -> Box:
        return Box(0.0, 0.0, float(self.width_px), float(self.height_px))


def area(b: Box) -> float:
    return b.area


def bounding_box(boxes: Iterable[Box]) -> Box:
    """Smallest box containing every input box."""
    boxes = list(boxes)
    if not boxes:
        raise ValueError("bounding_box of an empty list is undefined")
    return Box(
        min(b.x_min for b in boxes),
        min(b.y_min for b in boxes),
        max(b.x_max for b in boxes),
        max(b.y_max for b in boxes),
    )


def intersect(a: Box, b: Box) -> Optional[Box]:
    """Overlap rectangle of two boxes, or None when they are apart.

    Boxes that only share an edge give a zero-area box.
    """
    x0 = max(a.x_min, b.x_min)
    y0 = max(a.y_min, b.y_min)
    x1 = min(a.x_max, b.x_max)
    y1 = min(a.y_max, b.y_max)
    if x1 < x0 or y1 < y0:
        return None
    return Box(x0, y0, x1, y1)


def iou(a: Box, b: Box) -> float:
    if a.area <= 0 and b.area <= 0:
        raise ValueError("iou is undefined for two zero-area boxes")
    inter = intersect(a, b)
    if inter is None:
        return 0.0
    i = inter.area
    return i / (a.area + b.area - i)


def union_area(boxes: Sequence[Box]) -> float:
    """Exact area covered by the union of ``boxes``.

    Compresses the distinct x and y edges into a grid of elementary cells,
    marks every cell lying inside some box and sums the marked cell areas.
    Memory is O(n^2) in the number of boxes.
    """
    boxes = [b for b in boxes if b.area > 0]
    if not boxes:
        return 0.0
    arr = np.array([b.as_tuple() for b in boxes], dtype=float)
    xs = np.unique(np.concatenate([arr[:, 0], arr[:, 2]]))
    ys = np.unique(np.concatenate([arr[:, 1], arr[:, 3]]))
    covered = np.zeros((len(ys) - 1, len(xs) - 1), dtype=bool)
    ix0 = np.searchsorted(xs, arr[:, 0])
    ix1 = np.searchsorted(xs, arr[:, 2])
    iy0 = np.searchsorted(ys, arr[:, 1])
    iy1 = np.searchsorted(ys, arr[:, 3])
    for a0, a1, b0, b1 in zip(ix0, ix1, iy0, iy1):
        covered[b0:b1, a0:a1] = True
    cell = np.outer(np.diff(ys), np.diff(xs))
    return float(cell[covered].sum())


def extend(b: Box, p: float, bounds: ImageMeta) -> Box:
    """Grow every edge outward by ``p`` times the matching box side, then clamp.

    Left/right edges move by ``p * width``, top/bottom by ``p * height``, so
    an unclamped box becomes ``(1 + 2p)`` times wider and taller.
    """
    if p < 0:
        raise ValueError("extension fraction must be non-negative")
    dx = p * b.width
    dy = p * b.height
    return Box(
        min(max(b.x_min - dx, 0.0), bounds.width_px),
        min(max(b.y_min - dy, 0.0), bounds.height_px),
        max(min(b.x_max + dx, float(bounds.width_px)), 0.0),
        max(min(b.y_max + dy, float(bounds.height_px)), 0.0),
    )
