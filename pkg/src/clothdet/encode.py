"""Render ground-truth scenes into head tensor sets.

This is the training-target encoding for a center-point detector: Gaussian
peaks on the center and keypoint heatmaps, direct width/height regression,
and fractional-offset channels. It doubles as the round-trip oracle for the
decoder: on clean, well-separated scenes decode(encode(s)) recovers s.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .categories import CategoryTable
from .heads import HeadTensorSet, new_head_tensors
from .scene import Scene, validate_scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncodeParams:
    stride: int = 4
    min_overlap: float = 0.7
    keypoint_radius_scale: float = 1.0

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if not 0 < self.min_overlap < 1:
            raise ValueError(f"min_overlap must be in (0, 1), got {self.min_overlap}")
        if self.keypoint_radius_scale <= 0:
            raise ValueError("keypoint_radius_scale must be positive")


def gaussian_radius(box_w_cells: float, box_h_cells: float, min_overlap: float) -> float:
    """Largest peak radius keeping IoU >= min_overlap under corner jitter.

    Takes the smallest root over the three standard jitter cases (box
    translated diagonally, both corners moved inward, both moved outward),
    so a box perturbed by up to the returned radius in any of these ways
    still overlaps the original at min_overlap. Floored at 0.

    Args:
        box_w_cells: box width in feature cells, > 0.
        box_h_cells: box height in feature cells, > 0.
        min_overlap: required IoU in (0, 1).

    Returns:
        Radius in cells, >= 0.
    """
    w, h = box_w_cells, box_h_cells
    if w <= 0 or h <= 0:
        raise ValueError(f"box dimensions must be positive, got {w} x {h}")
    if not 0 < min_overlap < 1:
        raise ValueError(f"min_overlap must be in (0, 1), got {min_overlap}")

    a1 = 1.0
    b1 = h + w
    c1 = w * h * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 - math.sqrt(b1 * b1 - 4 * a1 * c1)) / (2 * a1)

    a2 = 4.0
    b2 = 2 * (h + w)
    c2 = (1 - min_overlap) * w * h
    r2 = (b2 - math.sqrt(b2 * b2 - 4 * a2 * c2)) / (2 * a2)

    a3 = 4.0 * min_overlap
    b3 = -2 * min_overlap * (h + w)
    c3 = (min_overlap - 1) * w * h
    r3 = (b3 + math.sqrt(b3 * b3 - 4 * a3 * c3)) / (2 * a3)

    return max(0.0, min(r1, r2, r3))


def render_gaussian(grid: np.ndarray, center_cell: tuple[int, int], radius: float, peak: float = 1.0) -> None:
    """Max-compose a Gaussian kernel into a 2-d grid, in place.

    The kernel is peak * exp(-(dx^2 + dy^2) / (2 sigma^2)) with
    sigma = max(radius, 1) / 3, rendered on a window of half-extent
    int(radius) around center_cell; tails falling outside the grid are
    truncated. The cell at center_cell receives exactly `peak`.

    Args:
        grid: (H, W) array, modified in place.
        center_cell: (row, col) integer cell inside the grid.
        radius: kernel radius in cells, >= 0.
        peak: kernel height at the center, default 1.0.
    """
    row, col = center_cell
    height, width = grid.shape
    if not (0 <= row < height and 0 <= col < width):
        raise ValueError(f"center cell {center_cell} outside {height} x {width} grid")
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")

    extent = int(radius)
    sigma = max(radius, 1.0) / 3.0
    ys = np.arange(-extent, extent + 1, dtype=np.float64)
    kernel = peak * np.exp(-(ys[:, None] ** 2 + ys[None, :] ** 2) / (2 * sigma * sigma))

    top = max(0, row - extent)
    bottom = min(height, row + extent + 1)
    left = max(0, col - extent)
    right = min(width, col + extent + 1)
    window = grid[top:bottom, left:right]
    clipped = kernel[
        top - (row - extent) : kernel.shape[0] - ((row + extent + 1) - bottom),
        left - (col - extent) : kernel.shape[1] - ((col + extent + 1) - right),
    ]
    np.maximum(window, clipped.astype(grid.dtype), out=window)


def encode_scene(scene: Scene, table: CategoryTable, params: EncodeParams = EncodeParams()) -> HeadTensorSet:
    """Render a scene into a zero-initialized head tensor set.

    Per item: a Gaussian peak on the item's category channel at the box
    center cell, width/height and the fractional center position at that
    cell, and for every labeled landmark its center-relative offset, a peak
    on its global keypoint channel, and its fractional position at the
    landmark cell. Image dims not divisible by the stride are padded up.

    Center-cell collisions keep the larger-area item's regression values;
    fractional landmark offsets keep the value under the higher heatmap peak
    (first writer on equal peaks). Both are logged.
    """
    validate_scene(scene, table)
    stride = params.stride
    grid_h = -(-scene.height // stride)
    grid_w = -(-scene.width // stride)
    tensors = new_head_tensors(grid_h, grid_w, stride, len(table.specs))

    claims: dict[tuple[int, int], float] = {}
    refine_best = np.zeros((grid_h, grid_w), dtype=np.float64)
    center_conflicts = 0
    refine_conflicts = 0

    for item in scene.items:
        x1, y1, x2, y2 = item.box
        w_cells = (x2 - x1) / stride
        h_cells = (y2 - y1) / stride
        cx = (x1 + x2) / 2 / stride
        cy = (y1 + y2) / 2 / stride
        col = min(int(cx), grid_w - 1)
        row = min(int(cy), grid_h - 1)

        radius = gaussian_radius(w_cells, h_cells, params.min_overlap) if w_cells > 0 and h_cells > 0 else 0.0
        render_gaussian(tensors.center[item.category_id - 1], (row, col), radius)

        area = w_cells * h_cells
        owner_area = claims.get((row, col))
        owns_cell = owner_area is None or area > owner_area
        if owner_area is not None:
            center_conflicts += 1
        if not owns_cell:
            continue
        claims[(row, col)] = area

        tensors.wh[0, row, col] = w_cells
        tensors.wh[1, row, col] = h_cells
        tensors.center_offset[0, row, col] = cx - col
        tensors.center_offset[1, row, col] = cy - row

        offset = table.spec(item.category_id).global_offset
        kp_radius = radius * params.keypoint_radius_scale
        for local, (lx, ly, vis) in enumerate(item.landmarks):
            if vis == 0:
                continue
            g = offset + local
            lx_cell = lx / stride
            ly_cell = ly / stride
            lcol = min(int(lx_cell), grid_w - 1)
            lrow = min(int(ly_cell), grid_h - 1)

            tensors.kp_offset[2 * g, row, col] = lx_cell - col
            tensors.kp_offset[2 * g + 1, row, col] = ly_cell - row
            render_gaussian(tensors.kp_heatmap[g], (lrow, lcol), kp_radius)

            if refine_best[lrow, lcol] < 1.0:
                refine_best[lrow, lcol] = 1.0
                tensors.kp_refine_offset[0, lrow, lcol] = lx_cell - lcol
                tensors.kp_refine_offset[1, lrow, lcol] = ly_cell - lrow
            elif (tensors.kp_refine_offset[0, lrow, lcol], tensors.kp_refine_offset[1, lrow, lcol]) != (
                np.float32(lx_cell - lcol), np.float32(ly_cell - lrow)
            ):
                refine_conflicts += 1

    if center_conflicts:
        logger.warning(
            "image %s: %d center cells claimed twice; keeping the larger-area item at each",
            scene.image_id, center_conflicts,
        )
    if refine_conflicts:
        logger.warning(
            "image %s: %d landmark cells hold offsets of an earlier peak",
            scene.image_id, refine_conflicts,
        )
    return tensors
