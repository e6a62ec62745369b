"""
8-bit grayscale heatmaps (binary PGM) of masks and attention slices.

Values map linearly from [0, vmax] to [0, 255], vmax defaulting to the
grid maximum. Box overlays are 1-pixel rectangles drawn by inverting the
pixels underneath, so they stay visible on any background.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw

from boxtraj.geometry.box import BoxParams, box_to_grid

logger = logging.getLogger(__name__)


def to_gray(grid: np.ndarray | torch.Tensor, vmax: float | None = None) -> np.ndarray:
    """Scale a finite 2-D grid to uint8."""
    if isinstance(grid, torch.Tensor):
        grid = grid.detach().cpu().numpy()
    values = np.asarray(grid, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"Heatmaps need a 2-D grid, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("Heatmap grid contains non-finite values")
    top = float(values.max()) if vmax is None else float(vmax)
    if top <= 0.0:
        return np.zeros(values.shape, dtype=np.uint8)
    scaled = np.clip(values / top, 0.0, 1.0) * 255.0
    return np.rint(scaled).astype(np.uint8)


def overlay_boxes(pixels: np.ndarray, boxes: Sequence[BoxParams]) -> np.ndarray:
    """Invert a 1-pixel outline of every box."""
    height, width = pixels.shape
    outline = Image.new("1", (width, height), 0)
    draw = ImageDraw.Draw(outline)
    for box in boxes:
        grid = box_to_grid(box, height, width)
        x0 = min(max(int(np.floor(grid.x0)), 0), width - 1)
        y0 = min(max(int(np.floor(grid.y0)), 0), height - 1)
        x1 = min(max(int(np.ceil(grid.x1)) - 1, x0), width - 1)
        y1 = min(max(int(np.ceil(grid.y1)) - 1, y0), height - 1)
        draw.rectangle((x0, y0, x1, y1), outline=1)
    mask = np.array(outline, dtype=bool)
    result = pixels.copy()
    result[mask] = 255 - result[mask]
    return result


def render_heatmap(
    grid: np.ndarray | torch.Tensor,
    path: Path,
    boxes: Sequence[BoxParams] = (),
    vmax: float | None = None,
) -> Path:
    """
    Write `grid` as a binary PGM (P5) with optional box overlays.

    Raises:
        ValueError: grid is not a finite 2-D array
        OSError: the file cannot be written
    """
    pixels = to_gray(grid, vmax)
    if boxes:
        pixels = overlay_boxes(pixels, boxes)
    path = Path(path)
    Image.fromarray(pixels).save(path, format="PPM")
    logger.debug("Wrote %dx%d heatmap %s", pixels.shape[1], pixels.shape[0], path)
    return path


def read_heatmap(path: Path) -> np.ndarray:
    with Image.open(path) as image:
        return np.array(image.convert("L"), dtype=np.uint8)
