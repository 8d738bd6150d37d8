"""Unified tiling: grid + boundary windows, instance reassignment, tile filtering.

Images at or under the tile size pass through as a single full-size window.
Larger images get a non-overlapping grid of tile-size windows plus
edge-anchored boundary windows (origin at dim - tile) whenever a dimension is
not an exact multiple of the tile size; boundary windows may overlap the last
grid windows. Windows that end up with zero fully contained instances are
dropped from the plan and only counted.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from PIL import Image

from .annotation_io import InstanceRecord
from .geometry import obb_within, remap_obb

DEFAULT_TILE = 1024


@dataclass(frozen=True)
class TileWindow:
    origin: tuple[int, int]
    size: tuple[int, int]
    parent_image: str = ""

    @property
    def x_max(self) -> int:
        return self.origin[0] + self.size[0]

    @property
    def y_max(self) -> int:
        return self.origin[1] + self.size[1]

    def is_grid(self, tile: int = DEFAULT_TILE) -> bool:
        """Grid windows sit at multiples of the tile size; boundary ones never do."""
        return self.origin[0] % tile == 0 and self.origin[1] % tile == 0

    def tile_name(self, stem: str, ext: str = ".png") -> str:
        return f"{stem}_{self.origin[0]}_{self.origin[1]}{ext}"


@dataclass
class TilePlan:
    windows: list[TileWindow]
    assignments: dict[TileWindow, list[InstanceRecord]]
    dropped_windows: int = 0
    partial_instances: int = 0


def _axis_origins(dim: int, tile: int) -> tuple[list[int], int]:
    """Window origins along one axis and the window extent on that axis."""
    if dim <= tile:
        return [0], dim
    origins = list(range(0, dim - tile + 1, tile))
    if dim % tile != 0:
        origins.append(dim - tile)
    return origins, tile


def plan_tiles(image_w: int, image_h: int, tile: int = DEFAULT_TILE, parent: str = "") -> list[TileWindow]:
    """All windows covering the image; grid first, then boundary extras."""
    if image_w <= 0 or image_h <= 0:
        raise ValueError(f"non-positive image size {image_w}x{image_h}")
    xs, w = _axis_origins(image_w, tile)
    ys, h = _axis_origins(image_h, tile)
    return [TileWindow((ox, oy), (w, h), parent) for oy in ys for ox in xs]


def assign_instances(
    windows: Sequence[TileWindow],
    instances: Sequence[InstanceRecord],
    dedupe: bool = False,
) -> TilePlan:
    """Assign each instance to every window that fully contains its OBB.

    Containment uses closed window bounds; assigned boxes are remapped to
    tile-local coordinates and the record's image_ref switches to the tile
    image name. With dedupe on, an instance lands only in its first
    containing window (plan order). Instances contained in no window count
    as partial; windows left with no instance are dropped.
    """
    assignments: dict[TileWindow, list[InstanceRecord]] = {w: [] for w in windows}
    partial = 0
    for rec in instances:
        hit = False
        for win in windows:
            if not obb_within(rec.obb, win.origin[0], win.origin[1], win.x_max, win.y_max):
                continue
            local = remap_obb(rec.obb, win.origin)
            stem = Path(rec.image_ref).stem or rec.image_ref
            assignments[win].append(
                replace(
                    rec,
                    instance_id=f"{rec.instance_id}@{win.origin[0]}_{win.origin[1]}",
                    image_ref=win.tile_name(stem),
                    image_w=win.size[0],
                    image_h=win.size[1],
                    obb=local,
                )
            )
            hit = True
            if dedupe:
                break
        if not hit:
            partial += 1
    kept = [w for w in windows if assignments[w]]
    dropped = len(windows) - len(kept)
    return TilePlan(
        windows=kept,
        assignments={w: assignments[w] for w in kept},
        dropped_windows=dropped,
        partial_instances=partial,
    )


def crop_tile(image: Image.Image, window: TileWindow) -> Image.Image:
    ox, oy = window.origin
    return image.crop((ox, oy, window.x_max, window.y_max))


def write_tile_crops(image_path: str | Path, plan: TilePlan, out_dir: str | Path) -> list[Path]:
    """Emit one PNG per kept window, named <image>_<ox>_<oy>.png."""
    image_path = Path(image_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    with Image.open(image_path) as img:
        for win in plan.windows:
            dest = out_dir / win.tile_name(image_path.stem)
            crop_tile(img, win).save(dest, format="PNG")
            written.append(dest)
    return written


def tile_image(
    image_path: str | Path,
    instances: Sequence[InstanceRecord],
    out_dir: str | Path | None = None,
    tile: int = DEFAULT_TILE,
    dedupe: bool = False,
) -> TilePlan:
    """Plan, assign, and (optionally) write crops for one image."""
    image_path = Path(image_path)
    with Image.open(image_path) as img:
        image_w, image_h = img.size
    windows = plan_tiles(image_w, image_h, tile, parent=image_path.name)
    plan = assign_instances(windows, instances, dedupe=dedupe)
    if out_dir is not None:
        write_tile_crops(image_path, plan, out_dir)
    return plan


def tile_many(
    jobs: Iterable[tuple[Path, Sequence[InstanceRecord]]],
    out_dir: str | Path | None,
    tile: int = DEFAULT_TILE,
    dedupe: bool = False,
    workers: int = 4,
) -> list[tuple[Path, TilePlan]]:
    """Tile many images on a bounded pool; results ordered by image path."""
    jobs = sorted(jobs, key=lambda j: str(j[0]))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        plans = list(
            pool.map(lambda j: tile_image(j[0], j[1], out_dir, tile, dedupe), jobs)
        )
    return [(path, plan) for (path, _), plan in zip(jobs, plans)]
