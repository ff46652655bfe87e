"""Procedurally rendered sprite grid: a 6-concept image dataset with the
classic disentanglement layout color(10) x shape(3) x scale(6) x
orientation(10) x posX(10) x posY(10) = 180,000 images.

Images are rendered on the fly from the factor tuple, so the full grid is
available locally without any download, and every image is a deterministic
function of its tuple.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

CONCEPTS = ("color", "shape", "scale", "orientation", "pos_x", "pos_y")
CARDINALITIES = (10, 3, 6, 10, 10, 10)
IMAGE_SIZE = 64

_PALETTE = np.array([colorsys.hsv_to_rgb(h / 10.0, 0.85, 0.95)
                     for h in range(10)])
_SHAPES = ("square", "ellipse", "triangle")


def grid_size() -> int:
    return int(np.prod(CARDINALITIES))


def index_to_tuple(index: int) -> tuple:
    if not 0 <= index < grid_size():
        raise ValueError(f"index {index} out of range")
    out = []
    for n in reversed(CARDINALITIES):
        out.append(index % n)
        index //= n
    return tuple(reversed(out))


def render(tuple_values) -> np.ndarray:
    """(64 x 64 x 3) float32 image in [0, 1] for one factor tuple."""
    color, shape, scale, orient, pos_x, pos_y = tuple_values
    axis = (np.arange(IMAGE_SIZE) + 0.5) / IMAGE_SIZE
    xx, yy = np.meshgrid(axis, axis)
    cx = 0.3 + 0.4 * pos_x / 9.0
    cy = 0.3 + 0.4 * pos_y / 9.0
    radius = 0.07 + 0.025 * scale
    theta = (np.pi / 2.0) * orient / 10.0  # orientations within a quadrant
    dx, dy = xx - cx, yy - cy
    rot_x = np.cos(theta) * dx + np.sin(theta) * dy
    rot_y = -np.sin(theta) * dx + np.cos(theta) * dy
    name = _SHAPES[shape]
    if name == "square":
        mask = (np.abs(rot_x) <= radius) & (np.abs(rot_y) <= radius)
    elif name == "ellipse":
        mask = (rot_x / radius) ** 2 + (rot_y / (0.6 * radius)) ** 2 <= 1.0
    else:  # equilateral triangle of circumradius ~1.3 r
        r = 1.3 * radius
        mask = (rot_y >= -0.5 * r)
        for phi in (np.pi / 2, np.pi / 2 + 2 * np.pi / 3,
                    np.pi / 2 - 2 * np.pi / 3):
            nx, ny = np.cos(phi), np.sin(phi)
            mask &= (nx * rot_x + ny * rot_y) <= 0.5 * r
    image = np.zeros((IMAGE_SIZE, IMAGE_SIZE, 3), dtype=np.float32)
    image[mask] = _PALETTE[color]
    return image


@dataclass(frozen=True)
class SpriteGrid:
    """Iterates (image, tuple) pairs in canonical order, last concept
    fastest; `limit` truncates to the first tuples for smoke runs."""

    limit: int = 0  # 0 = full grid

    def __len__(self) -> int:
        total = grid_size()
        return min(self.limit, total) if self.limit else total

    def concept_names(self) -> tuple:
        return CONCEPTS

    def cardinalities(self) -> tuple:
        return CARDINALITIES

    def label_at(self, row: int) -> tuple:
        return index_to_tuple(row)

    def image_at(self, row: int) -> np.ndarray:
        return render(self.label_at(row))


DATASETS = {
    "sprites": lambda: SpriteGrid(),
    "sprites-smoke": lambda: SpriteGrid(limit=100),
}


def load_dataset(name: str, limit: int = 0) -> SpriteGrid:
    if name not in DATASETS:
        raise ValueError(f"unknown dataset {name!r}; "
                         f"available: {sorted(DATASETS)}")
    dataset = DATASETS[name]()
    if limit:
        dataset = SpriteGrid(limit=limit)
    return dataset
