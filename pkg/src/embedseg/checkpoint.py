"""Binary model checkpoints.

Layout (all integers little-endian):

    magic   4 bytes  b"ESEG"
    version u32      currently 1
    cfg_len u32      length of the UTF-8 JSON config block
    config  bytes    EmbedderConfig fields + xyz standardization stats
    count   u32      number of parameter tensors
    per tensor:
        name_len u16, name bytes (ascii)
        ndim     u8,  dims u32 each
        data     float32, C order

Round-trips are bit-exact: parameters are stored and reloaded as raw float32.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from embedseg.network import EmbedderConfig, EmbedderModel

MAGIC = b"ESEG"
VERSION = 1


def save_model(model: EmbedderModel, path: str | Path) -> None:
    cfg = model.config
    meta = {
        "fusion": cfg.fusion,
        "dim": cfg.dim,
        "widths": list(cfg.widths),
        "learning_rate": cfg.learning_rate,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "concat_project": cfg.concat_project,
        "xyz_mean": [float(v) for v in model.xyz_mean],
        "xyz_std": [float(v) for v in model.xyz_std],
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    params = model.parameters()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(params)))
        for name, arr in params:
            data = np.ascontiguousarray(arr, dtype=np.float32)
            encoded = name.encode("ascii")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.astype("<f4").tobytes())


def load_model(path: str | Path) -> EmbedderModel:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a model checkpoint (bad magic)")
        version, cfg_len = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        meta = json.loads(fh.read(cfg_len).decode("utf-8"))
        config = EmbedderConfig(
            fusion=meta["fusion"],
            dim=meta["dim"],
            widths=tuple(meta["widths"]),
            learning_rate=meta["learning_rate"],
            epochs=meta["epochs"],
            batch_size=meta["batch_size"],
            seed=meta["seed"],
            concat_project=meta["concat_project"],
        )
        model = EmbedderModel(config)
        model.xyz_mean = np.array(meta["xyz_mean"], dtype=np.float32)
        model.xyz_std = np.array(meta["xyz_std"], dtype=np.float32)
        (count,) = struct.unpack("<I", fh.read(4))
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("ascii")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * n), dtype="<f4").reshape(shape).copy()
            model.set_parameter(name, data)
    return model
