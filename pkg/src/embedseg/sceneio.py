"""Scene and artifact file formats.

Per scene, four files share a stem:

    <stem>.rgb.png          8-bit RGB
    <stem>.depth.png        16-bit grayscale, 1 unit = 1 mm
    <stem>.labels.png       16-bit grayscale instance ids, 0 = background
    <stem>.intrinsics.txt   "fx fy cx cy" on one line

Embedding dumps use a small binary container:

    magic b"ESEGF", u32 version (1), u32 H, u32 W, u32 C, float32 data (C order)

Writers are byte-deterministic for identical inputs.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from embedseg.core import CameraIntrinsics, RgbdFrame
from embedseg.scenes import SyntheticScene

FEATURE_MAGIC = b"ESEGF"
FEATURE_VERSION = 1
DEPTH_SCALE = 1000.0  # meters -> millimeters


def scene_stem(index: int) -> str:
    return f"scene_{index:05d}"


def write_rgb(path: Path, rgb: np.ndarray) -> None:
    data = np.clip(np.round(np.asarray(rgb, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def read_rgb(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0


def write_depth(path: Path, depth_m: np.ndarray) -> None:
    mm = np.clip(np.round(np.asarray(depth_m, dtype=np.float64) * DEPTH_SCALE), 0, 65535)
    Image.fromarray(mm.astype(np.uint16)).save(path, format="PNG")


def read_depth(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img, dtype=np.float32) / DEPTH_SCALE


def write_labels(path: Path, labels: np.ndarray) -> None:
    lab = np.asarray(labels)
    if lab.min() < 0 or lab.max() > 65535:
        raise ValueError("label ids must fit in uint16")
    Image.fromarray(lab.astype(np.uint16)).save(path, format="PNG")


def read_labels(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img, dtype=np.int32)


def write_intrinsics(path: Path, intr: CameraIntrinsics) -> None:
    path.write_text(f"{intr.fx!r} {intr.fy!r} {intr.cx!r} {intr.cy!r}\n")


def read_intrinsics(path: Path) -> CameraIntrinsics:
    fx, fy, cx, cy = (float(tok) for tok in path.read_text().split())
    return CameraIntrinsics(fx, fy, cx, cy)


def write_scene(out_dir: Path, index: int, scene: SyntheticScene) -> dict:
    stem = scene_stem(index)
    files = {
        "rgb": f"{stem}.rgb.png",
        "depth": f"{stem}.depth.png",
        "labels": f"{stem}.labels.png",
        "intrinsics": f"{stem}.intrinsics.txt",
    }
    write_rgb(out_dir / files["rgb"], scene.frame.rgb)
    write_depth(out_dir / files["depth"], scene.frame.depth)
    write_labels(out_dir / files["labels"], scene.truth)
    write_intrinsics(out_dir / files["intrinsics"], scene.frame.intrinsics)
    return {"id": stem, **files}


def read_scene(scene_dir: Path, stem: str) -> tuple[RgbdFrame, np.ndarray]:
    rgb = read_rgb(scene_dir / f"{stem}.rgb.png")
    depth = read_depth(scene_dir / f"{stem}.depth.png")
    labels = read_labels(scene_dir / f"{stem}.labels.png")
    intr = read_intrinsics(scene_dir / f"{stem}.intrinsics.txt")
    return RgbdFrame.from_depth(rgb, depth, intr), labels


def write_manifest(out_dir: Path, entries: list[dict], spec_fields: dict) -> None:
    payload = {"count": len(entries), "spec": spec_fields, "scenes": entries}
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )


def read_manifest(scene_dir: Path) -> dict:
    return json.loads((scene_dir / "manifest.json").read_text())


def list_scene_stems(scene_dir: Path) -> list[str]:
    manifest = scene_dir / "manifest.json"
    if manifest.exists():
        return [e["id"] for e in read_manifest(scene_dir)["scenes"]]
    return sorted(p.name[: -len(".labels.png")] for p in scene_dir.glob("*.labels.png"))


def write_embedding(path: Path, grid: np.ndarray) -> None:
    grid = np.ascontiguousarray(grid, dtype=np.float32)
    if grid.ndim != 3:
        raise ValueError("embedding grid must be (H, W, C)")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IIII", FEATURE_VERSION, *grid.shape))
        fh.write(grid.astype("<f4").tobytes())


def read_embedding(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(5) != FEATURE_MAGIC:
            raise ValueError(f"{path}: not an embedding dump (bad magic)")
        version, h, w, c = struct.unpack("<IIII", fh.read(16))
        if version != FEATURE_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        return np.frombuffer(fh.read(4 * h * w * c), dtype="<f4").reshape(h, w, c).copy()
