"""Visualization helpers for feature maps and label masks."""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np
from PIL import Image


def feature_map_image(grid: np.ndarray) -> np.ndarray:
    """Collapse an (H, W, C) feature map to an 8-bit RGB image.

    Channels are summed with interval three (0, 3, 6, ... into red; 1, 4, 7,
    ... into green; 2, 5, 8, ... into blue), then jointly min-max normalized
    to 0..255. A constant map has no range and renders as mid-gray 128.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3:
        raise ValueError("feature map must be (H, W, C)")
    summed = np.stack(
        [grid[:, :, k::3].sum(axis=2) for k in range(3)], axis=2
    )
    lo, hi = summed.min(), summed.max()
    if hi - lo < 1e-12:
        return np.full(summed.shape, 128, dtype=np.uint8)
    return np.round((summed - lo) / (hi - lo) * 255.0).astype(np.uint8)


def label_palette() -> np.ndarray:
    """Fixed 256-color palette; id 0 is black, ids reuse colors past 255."""
    colors = np.zeros((256, 3), dtype=np.uint8)
    for i in range(1, 256):
        hue = (i * 0.61803398875) % 1.0
        r, g, b = colorsys.hsv_to_rgb(hue, 0.75, 1.0)
        colors[i] = (round(r * 255), round(g * 255), round(b * 255))
    return colors


_PALETTE = label_palette()


def label_image(mask: np.ndarray) -> np.ndarray:
    """Render a label mask with the fixed palette (same id, same color)."""
    mask = np.asarray(mask)
    return _PALETTE[mask % 256]


def save_image(path: str | Path, rgb8: np.ndarray) -> None:
    Image.fromarray(rgb8, mode="RGB").save(path, format="PNG")
