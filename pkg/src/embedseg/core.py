"""Grid and unit-sphere primitives shared across the package.

Grids are plain numpy arrays in row-major, channel-last layout:

* image grids        (H, W) or (H, W, 3), float32
* embedding grids    (H, W, C), float32 unit vectors along the last axis
* label masks        (H, W), int32, 0 = background

Values are stored in 32 bits; reductions accumulate in 64 bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")


@dataclass(frozen=True)
class RgbdFrame:
    """A registered RGB image, depth map, and derived organized point cloud.

    ``depth`` is in meters with 0 marking missing measurements; the cloud at
    missing pixels is (0, 0, 0). Use :meth:`from_depth` to construct the
    cloud by back-projection; direct construction accepts a precomputed cloud
    (crops carry resized clouds that are no longer exact back-projections).
    """

    rgb: np.ndarray
    depth: np.ndarray
    intrinsics: CameraIntrinsics
    cloud: np.ndarray

    @classmethod
    def from_depth(
        cls, rgb: np.ndarray, depth: np.ndarray, intrinsics: CameraIntrinsics
    ) -> "RgbdFrame":
        rgb = np.asarray(rgb, dtype=np.float32)
        depth = np.asarray(depth, dtype=np.float32)
        if rgb.shape[:2] != depth.shape or rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ValueError(
                f"rgb {rgb.shape} and depth {depth.shape} must share H, W"
            )
        return cls(rgb, depth, intrinsics, backproject(depth, intrinsics))

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]


def backproject(depth: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Lift a depth map (H, W) to an organized XYZ cloud (H, W, 3).

    Pixel (u, v) at depth z maps to ((u - cx) z / fx, (v - cy) z / fy, z);
    z = 0 marks missing depth and maps to the origin.
    """
    depth = np.asarray(depth, dtype=np.float32)
    if not np.isfinite(depth).all():
        raise ValueError("depth contains non-finite values")
    if (depth < 0).any():
        raise ValueError("depth contains negative values")
    h, w = depth.shape
    u = np.arange(w, dtype=np.float32)[None, :]
    v = np.arange(h, dtype=np.float32)[:, None]
    cloud = np.empty((h, w, 3), dtype=np.float32)
    cloud[..., 0] = (u - intr.cx) * depth / intr.fx
    cloud[..., 1] = (v - intr.cy) * depth / intr.fy
    cloud[..., 2] = depth
    return cloud


def project(cloud_xyz: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Perspective projection (..., 3) -> (..., 2) pixel coordinates (u, v)."""
    xyz = np.asarray(cloud_xyz, dtype=np.float64)
    z = xyz[..., 2]
    uv = np.empty(xyz.shape[:-1] + (2,), dtype=np.float64)
    uv[..., 0] = xyz[..., 0] * intr.fx / z + intr.cx
    uv[..., 1] = xyz[..., 1] * intr.fy / z + intr.cy
    return uv


def normalize_embeddings(raw: np.ndarray) -> np.ndarray:
    """Scale every pixel vector to unit length.

    Vectors with vanishing norm become the first basis vector instead of
    erroring, which keeps freshly initialized networks usable. Idempotent.
    """
    raw = np.asarray(raw)
    norms = np.sqrt(
        np.einsum("...c,...c->...", raw.astype(np.float64), raw.astype(np.float64))
    )
    safe = np.maximum(norms, 1e-30)
    out = (raw / safe[..., None].astype(raw.dtype)).astype(raw.dtype)
    dead = norms < 1e-12
    if dead.any():
        out[dead] = 0
        out[dead, ..., 0] = 1
    return out


def cosine_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(1 - a.b) / 2 on unit vectors, clamped to [0, 1]. Broadcasts."""
    dot = np.einsum("...c,...c->...", np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    return np.clip(0.5 * (1.0 - dot), 0.0, 1.0)


def spherical_mean(vectors: np.ndarray) -> np.ndarray:
    """Normalized sum of unit vectors (n, C) -> (C,).

    A vanishing resultant (for example two antipodal inputs) returns the
    first basis vector, the same degenerate-direction convention used by
    embedding normalization.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise ValueError("expected a non-empty (n, C) array of unit vectors")
    total = vectors.sum(axis=0)
    norm = np.linalg.norm(total)
    if norm < 1e-12:
        out = np.zeros(vectors.shape[1])
        out[0] = 1.0
        return out
    return total / norm


def compact_labels(mask: np.ndarray) -> np.ndarray:
    """Remap identifiers to {0..K}, background 0 fixed, first-occurrence order."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError("label mask must be 2-D")
    if mask.size and mask.min() < 0:
        raise ValueError("label identifiers must be non-negative")
    flat = mask.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = uniq[np.argsort(first)]
    order = order[order != 0]
    lut = np.zeros(int(flat.max()) + 1 if flat.size else 1, dtype=np.int32)
    for new, old in enumerate(order, start=1):
        lut[old] = new
    return lut[flat].reshape(mask.shape)


def paint_embeddings(labels: np.ndarray, dim: int) -> np.ndarray:
    """Ground-truth embedding grid: label k paints basis vector e_k everywhere.

    Distinct labels sit at cosine distance 0.5, far beyond typical merge
    thresholds, so clustering a painted grid must recover the label mask.
    Requires every label to be < dim.
    """
    labels = np.asarray(labels)
    if labels.max(initial=0) >= dim:
        raise ValueError(f"labels up to {labels.max()} need dim > that, got {dim}")
    grid = np.zeros((*labels.shape, dim), dtype=np.float32)
    rr, cc = np.mgrid[0 : labels.shape[0], 0 : labels.shape[1]]
    grid[rr, cc, labels] = 1.0
    return grid


def resize_nearest(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize on the leading two axes (half-pixel centers)."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    rows = np.minimum((np.arange(out_h) + 0.5) * h / out_h, h - 1).astype(np.int64)
    cols = np.minimum((np.arange(out_w) + 0.5) * w / out_w, w - 1).astype(np.int64)
    return img[rows[:, None], cols[None, :]]


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize on the leading two axes (half-pixel centers, clamped)."""
    img = np.asarray(img, dtype=np.float32)
    h, w = img.shape[:2]
    fy = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    fx = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    y0 = np.floor(fy).astype(np.int64)
    x0 = np.floor(fx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (fy - y0).astype(np.float32)
    wx = (fx - x0).astype(np.float32)
    if img.ndim == 2:
        wy_ = wy[:, None]
        wx_ = wx[None, :]
    else:
        wy_ = wy[:, None, None]
        wx_ = wx[None, :, None]
    top = img[y0[:, None], x0[None, :]] * (1 - wx_) + img[y0[:, None], x1[None, :]] * wx_
    bot = img[y1[:, None], x0[None, :]] * (1 - wx_) + img[y1[:, None], x1[None, :]] * wx_
    return (top * (1 - wy_) + bot * wy_).astype(np.float32)
