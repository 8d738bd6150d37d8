"""Oriented/axis-aligned box math, scale tiers, and focal crop windows.

Everything here is pure pixel-space arithmetic: no image decoding, no I/O.
Safe to call from any number of concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Tuple

from .errors import DegenerateRegion

Point = Tuple[float, float]


@dataclass(frozen=True)
class ObbQuad:
    """An oriented box given as 4 ordered corner points in pixel space."""

    corners: Tuple[Point, Point, Point, Point]

    def __post_init__(self):
        if len(self.corners) != 4:
            raise ValueError(f"quad needs exactly 4 corners, got {len(self.corners)}")
        pts = tuple((float(x), float(y)) for x, y in self.corners)
        for x, y in pts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError(f"non-finite corner ({x}, {y})")
        object.__setattr__(self, "corners", pts)

    @classmethod
    def from_flat(cls, coords: Sequence[float]) -> "ObbQuad":
        """Build from a flat [x1, y1, ..., x4, y4] sequence."""
        if len(coords) != 8:
            raise ValueError(f"expected 8 coordinates, got {len(coords)}")
        it = iter(coords)
        return cls(tuple(zip(it, it)))  # type: ignore[arg-type]

    def to_flat(self) -> list[float]:
        return [v for pt in self.corners for v in pt]

    @property
    def area(self) -> float:
        """Absolute shoelace area of the corner polygon."""
        s = 0.0
        for (x1, y1), (x2, y2) in zip(self.corners, self.corners[1:] + self.corners[:1]):
            s += x1 * y2 - x2 * y1
        return abs(s) / 2.0

    def translated(self, dx: float, dy: float) -> "ObbQuad":
        return ObbQuad(tuple((x + dx, y + dy) for x, y in self.corners))  # type: ignore[arg-type]


@dataclass(frozen=True)
class AabbRect:
    """Axis-aligned rectangle; integer-valued after rasterization."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"empty rect ({self.x_min},{self.y_min},{self.x_max},{self.y_max})")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def longer_side(self) -> float:
        return max(self.width, self.height)

    @property
    def center(self) -> Point:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def contains_point(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


class ScaleTier(Enum):
    LARGE = "large"
    MEDIUM = "medium"
    SMALL = "small"


@dataclass(frozen=True)
class FocalConfig:
    """Pixel thresholds and patch sizes for the scale-adaptive focal crop.

    Boundary values sit in the medium tier: the three tiers are
    L > medium_patch, small_patch <= L <= medium_patch, and L < small_patch,
    so they partition (0, inf).
    """

    medium_patch: int = 224
    small_patch: int = 112
    focal_resize: int = 224
    global_resize: int = 448

    def __post_init__(self):
        if not (0 < self.small_patch < self.medium_patch):
            raise ValueError("need 0 < small_patch < medium_patch")
        if self.focal_resize <= 0 or self.global_resize <= 0:
            raise ValueError("resize targets must be positive")


DEFAULT_FOCAL = FocalConfig()


def enclosing_aabb(obb: ObbQuad) -> AabbRect:
    """Minimum axis-aligned rectangle containing all 4 corners.

    Raises DegenerateRegion when the quad has zero area.
    """
    if obb.area <= 0.0:
        raise DegenerateRegion(f"zero-area quad {obb.corners}")
    xs = [x for x, _ in obb.corners]
    ys = [y for _, y in obb.corners]
    return AabbRect(min(xs), min(ys), max(xs), max(ys))


def classify_scale(obb: ObbQuad, cfg: FocalConfig = DEFAULT_FOCAL) -> ScaleTier:
    """Tier by the longer side L of the enclosing axis-aligned box."""
    longer = enclosing_aabb(obb).longer_side
    if longer > cfg.medium_patch:
        return ScaleTier.LARGE
    if longer >= cfg.small_patch:
        return ScaleTier.MEDIUM
    return ScaleTier.SMALL


def _window_axis(center: float, patch: int, extent: int) -> Tuple[int, int]:
    """Place a fixed-size window on one axis, sliding inward at the borders.

    When the image is smaller than the patch the window spans the full
    extent instead of erroring.
    """
    if extent <= patch:
        return 0, extent
    lo = int(round(center)) - patch // 2
    lo = min(max(lo, 0), extent - patch)
    return lo, lo + patch


def focal_crop(
    obb: ObbQuad, image_w: int, image_h: int, cfg: FocalConfig = DEFAULT_FOCAL
) -> AabbRect:
    """Scale-adaptive focal window, always fully inside the image.

    Large objects crop their own bounding box (clipped to the image);
    medium/small objects get fixed patches centered on the box center,
    translated inward when they would overflow. Rasterized as half-open
    integer intervals [x_min, x_max).
    """
    aabb = enclosing_aabb(obb)
    if aabb.x_max <= 0 or aabb.y_max <= 0 or aabb.x_min >= image_w or aabb.y_min >= image_h:
        raise ValueError("object box does not intersect the image")
    tier = classify_scale(obb, cfg)
    if tier is ScaleTier.LARGE:
        x_min = max(int(math.floor(aabb.x_min)), 0)
        y_min = max(int(math.floor(aabb.y_min)), 0)
        x_max = min(int(math.ceil(aabb.x_max)), image_w)
        y_max = min(int(math.ceil(aabb.y_max)), image_h)
        return AabbRect(x_min, y_min, x_max, y_max)
    patch = cfg.medium_patch if tier is ScaleTier.MEDIUM else cfg.small_patch
    cx, cy = aabb.center
    x0, x1 = _window_axis(cx, patch, image_w)
    y0, y1 = _window_axis(cy, patch, image_h)
    return AabbRect(x0, y0, x1, y1)


def remap_obb(obb: ObbQuad, tile_origin: Point) -> ObbQuad:
    """Translate corners into the coordinate frame of a tile at tile_origin."""
    ox, oy = tile_origin
    return obb.translated(-ox, -oy)


def obb_within(obb: ObbQuad, x_min: float, y_min: float, x_max: float, y_max: float) -> bool:
    """True when all 4 corners lie inside the closed rectangle."""
    return all(x_min <= x <= x_max and y_min <= y <= y_max for x, y in obb.corners)


def round_flat(coords: Iterable[float]) -> list[int]:
    """Round coordinates to integers for prompt/text serialization."""
    return [int(round(c)) for c in coords]
