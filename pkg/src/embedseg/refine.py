"""Zoom-in cluster refinement: a second clustering pass per detected segment.

For every first-stage cluster, its bounding box is padded, clipped, and
resized to a square patch (bilinear RGB, nearest depth/XYZ/labels; XYZ is
resampled directly rather than re-back-projected so patch statistics match
the RoI training crops). A dedicated RoI model embeds the patch, the patch
is clustered, and resulting segments are mapped back to image coordinates.
A candidate segment survives only if the fraction of it lying inside the
original segment exceeds the keep threshold; the patch's background cluster
never survives. Kept segments are written into a fresh mask in processing
order (later segments overwrite earlier ones on conflicts) and pixels no
kept segment claims become background.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from embedseg.core import RgbdFrame, compact_labels, resize_bilinear, resize_nearest
from embedseg.meanshift import MeanShiftConfig, segment_image


@dataclass(frozen=True)
class RefineConfig:
    roi_size: int = 64
    padding: float = 0.25          # bounding-box fraction added per side
    keep_overlap: float = 0.5      # |candidate n original| / |candidate| must exceed this
    cluster: MeanShiftConfig = field(default_factory=MeanShiftConfig)

    def __post_init__(self):
        if self.roi_size < 16:
            raise ValueError("roi_size must be >= 16")
        if not (0.0 < self.keep_overlap <= 1.0):
            raise ValueError("keep_overlap must lie in (0, 1]")


@dataclass(frozen=True)
class RoiCrop:
    rect: tuple[int, int, int, int]   # r0, c0, height, width in image coordinates
    patch: RgbdFrame                  # roi_size x roi_size resampled frame
    segment: np.ndarray               # bool (roi_size, roi_size), the originating segment


def _padded_rect(rows: np.ndarray, cols: np.ndarray, padding: float,
                 h: int, w: int) -> tuple[int, int, int, int]:
    r0, r1 = int(rows.min()), int(rows.max())
    c0, c1 = int(cols.min()), int(cols.max())

    # Total padding is rounded once and split low/high so a 10 px box with
    # 0.25 per-side padding grows to exactly 15 px.
    def expand(lo: int, hi: int, limit: int) -> tuple[int, int]:
        extent = hi - lo + 1
        total = int(round(2.0 * padding * extent))
        lo2 = max(0, lo - total // 2)
        hi2 = min(limit - 1, hi + (total - total // 2))
        return lo2, hi2
    r0, r1 = expand(r0, r1, h)
    c0, c1 = expand(c0, c1, w)
    return r0, c0, r1 - r0 + 1, c1 - c0 + 1


def crop_roi(frame: RgbdFrame, mask: np.ndarray, cluster_id: int, cfg: RefineConfig) -> RoiCrop:
    """Crop the padded bounding box of one segment and resize it to a square."""
    mask = np.asarray(mask)
    where = mask == cluster_id
    if not where.any():
        raise ValueError(f"cluster id {cluster_id} not present in mask")
    rows, cols = np.nonzero(where)
    r0, c0, rh, rw = _padded_rect(rows, cols, cfg.padding, mask.shape[0], mask.shape[1])
    s = cfg.roi_size

    rgb = resize_bilinear(frame.rgb[r0 : r0 + rh, c0 : c0 + rw], s, s)
    depth = resize_nearest(frame.depth[r0 : r0 + rh, c0 : c0 + rw], s, s)
    cloud = resize_nearest(frame.cloud[r0 : r0 + rh, c0 : c0 + rw], s, s)
    seg = resize_nearest(where[r0 : r0 + rh, c0 : c0 + rw].astype(np.uint8), s, s) > 0

    sy = s / rh
    sx = s / rw
    intr = frame.intrinsics
    patch_intr = type(intr)(
        fx=intr.fx * sx, fy=intr.fy * sy,
        cx=(intr.cx - c0 + 0.5) * sx - 0.5, cy=(intr.cy - r0 + 0.5) * sy - 0.5,
    )
    patch = RgbdFrame(rgb=rgb, depth=depth, intrinsics=patch_intr, cloud=cloud)
    return RoiCrop(rect=(r0, c0, rh, rw), patch=patch, segment=seg)


def roi_training_crops(
    frame: RgbdFrame, truth: np.ndarray, cfg: RefineConfig
) -> list[tuple[RgbdFrame, np.ndarray]]:
    """One (patch, labels) training pair per ground-truth object."""
    truth = np.asarray(truth)
    crops = []
    for obj in np.unique(truth):
        if obj == 0:
            continue
        roi = crop_roi(frame, truth, int(obj), cfg)
        r0, c0, rh, rw = roi.rect
        labels = resize_nearest(truth[r0 : r0 + rh, c0 : c0 + rw], cfg.roi_size, cfg.roi_size)
        crops.append((roi.patch, compact_labels(labels)))
    return crops


def _embed(model, frame: RgbdFrame) -> np.ndarray:
    if callable(model) and not hasattr(model, "forward"):
        return model(frame)
    return model.forward(frame)


def refine_segment(
    roi: RoiCrop,
    roi_model,
    cfg: RefineConfig,
    image_shape: tuple[int, int],
    original: np.ndarray,
    seed: int = 0,
) -> list[np.ndarray]:
    """Cluster one RoI and return kept segments as full-image boolean masks.

    ``roi_model`` is an EmbedderModel or any callable mapping an RgbdFrame
    patch to a unit embedding grid (tests inject painted oracles this way).
    """
    grid = _embed(roi_model, roi.patch)
    patch_labels = segment_image(grid, cfg.cluster, seed)
    r0, c0, rh, rw = roi.rect

    back = resize_nearest(patch_labels, rh, rw)
    kept: list[np.ndarray] = []
    for lab in np.unique(back):
        if lab == 0:
            continue  # the patch's background cluster is never kept
        seg = np.zeros(image_shape, dtype=bool)
        seg[r0 : r0 + rh, c0 : c0 + rw] = back == lab
        area = int(seg.sum())
        if area == 0:
            continue
        inside = int((seg & original).sum())
        if inside / area > cfg.keep_overlap:
            kept.append(seg)
    return kept


def roi_clustering_seed(seed: int, cluster_id: int) -> int:
    """Per-RoI clustering seed, derived so reruns are reproducible."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, int(cluster_id)]))
    return int(rng.integers(2**62))


def refine_all(
    frame: RgbdFrame,
    stage_one: np.ndarray,
    roi_model,
    cfg: RefineConfig,
    seed: int = 0,
) -> np.ndarray:
    """Refine every first-stage cluster and aggregate the kept segments."""
    stage_one = np.asarray(stage_one)
    out = np.zeros_like(stage_one, dtype=np.int32)
    next_id = 1
    for cid in np.unique(stage_one):
        if cid == 0:
            continue
        roi = crop_roi(frame, stage_one, int(cid), cfg)
        segments = refine_segment(
            roi, roi_model, cfg, stage_one.shape, stage_one == cid,
            seed=roi_clustering_seed(seed, int(cid)),
        )
        for seg in segments:
            out[seg] = next_id
            next_id += 1
    return compact_labels(out)
