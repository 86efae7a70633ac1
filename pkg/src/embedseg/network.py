"""A small fully convolutional pixel-embedding network, trained from scratch.

Each tower is four 3x3 convolutions with one stride-2 stage and a nearest-
neighbor 2x upsample before the final projection to the embedding width:

    conv s1 -> relu -> conv s2 -> relu -> conv s1 -> relu -> up2x -> conv s1

RGB and point-cloud inputs combine in one of five modes: ``early`` feeds
their 6-channel concatenation to a single tower; ``add`` and ``concat`` run
two towers with independent weights and merge their outputs (concatenation
re-projects 2C -> C through a trainable 1x1 convolution unless configured to
keep the doubled width); ``rgb`` and ``depth`` are single-input ablations.

Forward emits the raw, pre-normalization map; :func:`forward` normalizes it
to unit length per pixel. Backpropagation is manual and exact. Training uses
bias-corrected adaptive moments (beta1 0.9, beta2 0.999, eps 1e-8) and is
deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from embedseg import kernels
from embedseg.core import RgbdFrame, normalize_embeddings
from embedseg.loss import LossConfig, total_loss_and_grad

FUSION_MODES = ("early", "add", "concat", "rgb", "depth")


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class EmbedderConfig:
    fusion: str = "add"
    dim: int = 16
    widths: tuple[int, int, int] = (16, 32, 32)
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 4
    seed: int = 0
    concat_project: bool = True  # False keeps the literal 2C concatenated output

    def __post_init__(self):
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}")
        if self.dim < 2:
            raise ValueError("embedding dim must be >= 2")
        if len(self.widths) != 3 or any(w < 1 for w in self.widths):
            raise ValueError("widths must be three positive layer widths")

    @property
    def out_channels(self) -> int:
        if self.fusion == "concat" and not self.concat_project:
            return 2 * self.dim
        return self.dim


def _up2(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=0), 2, axis=1)


def _up2_grad(g: np.ndarray) -> np.ndarray:
    h, w, c = g.shape
    return g.reshape(h // 2, 2, w // 2, 2, c).sum(axis=(1, 3))


class Tower:
    """One conv stack; owns its parameter arrays."""

    def __init__(self, in_channels: int, widths: tuple[int, int, int], out_channels: int,
                 rng: np.random.Generator, dtype=np.float32):
        w1, w2, w3 = widths
        self.params: list[np.ndarray] = []
        shapes = [
            (w1, in_channels, 3, 3),
            (w2, w1, 3, 3),
            (w3, w2, 3, 3),
            (out_channels, w3, 3, 3),
        ]
        for shape in shapes:
            bound = 1.0 / np.sqrt(shape[1] * shape[2] * shape[3])
            self.params.append(rng.uniform(-bound, bound, size=shape).astype(dtype))
            self.params.append(np.zeros(shape[0], dtype=dtype))

    def weight(self, layer: int) -> np.ndarray:
        return self.params[2 * layer]

    def bias(self, layer: int) -> np.ndarray:
        return self.params[2 * layer + 1]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        z1 = kernels.conv2d_forward(x, self.weight(0), self.bias(0), 1)
        a1 = np.maximum(z1, 0)
        z2 = kernels.conv2d_forward(a1, self.weight(1), self.bias(1), 2)
        a2 = np.maximum(z2, 0)
        z3 = kernels.conv2d_forward(a2, self.weight(2), self.bias(2), 1)
        a3 = np.maximum(z3, 0)
        u3 = _up2(a3)
        out = kernels.conv2d_forward(u3, self.weight(3), self.bias(3), 1)
        cache = {"x": x, "z1": z1, "a1": a1, "z2": z2, "a2": a2, "z3": z3, "u3": u3}
        return out, cache

    def backward(self, g: np.ndarray, cache: dict) -> list[np.ndarray]:
        x, a1, a2, u3 = cache["x"], cache["a1"], cache["a2"], cache["u3"]
        gw4, gb4 = kernels.conv2d_param_grad(u3, g, 1, 3)
        gu3 = kernels.conv2d_input_grad(g, self.weight(3), 1, u3.shape[0], u3.shape[1])
        gz3 = _up2_grad(gu3) * (cache["z3"] > 0)
        gw3, gb3 = kernels.conv2d_param_grad(a2, gz3, 1, 3)
        ga2 = kernels.conv2d_input_grad(gz3, self.weight(2), 1, a2.shape[0], a2.shape[1])
        gz2 = ga2 * (cache["z2"] > 0)
        gw2, gb2 = kernels.conv2d_param_grad(a1, gz2, 2, 3)
        ga1 = kernels.conv2d_input_grad(gz2, self.weight(1), 2, a1.shape[0], a1.shape[1])
        gz1 = ga1 * (cache["z1"] > 0)
        gw1, gb1 = kernels.conv2d_param_grad(x, gz1, 1, 3)
        return [gw1, gb1, gw2, gb2, gw3, gb3, gw4, gb4]

    def astype(self, dtype) -> "Tower":
        clone = object.__new__(Tower)
        clone.params = [p.astype(dtype) for p in self.params]
        return clone


_PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")


class EmbedderModel:
    """Config, towers, optional concat projection, and input statistics."""

    def __init__(self, config: EmbedderConfig, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.xyz_mean = np.zeros(3, dtype=np.float32)
        self.xyz_std = np.ones(3, dtype=np.float32)
        self.towers: dict[str, Tower] = {}
        if config.fusion == "early":
            tower_inputs = {"main": 6}
        elif config.fusion == "rgb":
            tower_inputs = {"main": 3}
        elif config.fusion == "depth":
            tower_inputs = {"main": 3}
        else:
            tower_inputs = {"rgb": 3, "depth": 3}
        for i, (name, cin) in enumerate(tower_inputs.items()):
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, i]))
            self.towers[name] = Tower(cin, config.widths, config.dim, rng, dtype)
        self.proj: list[np.ndarray] | None = None
        if config.fusion == "concat" and config.concat_project:
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, 99]))
            bound = 1.0 / np.sqrt(2 * config.dim)
            self.proj = [
                rng.uniform(-bound, bound, size=(config.dim, 2 * config.dim, 1, 1)).astype(dtype),
                np.zeros(config.dim, dtype=dtype),
            ]

    # -- parameters ------------------------------------------------------

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for tname in sorted(self.towers):
            for pname, arr in zip(_PARAM_NAMES, self.towers[tname].params):
                out.append((f"{tname}.{pname}", arr))
        if self.proj is not None:
            out.append(("proj.w", self.proj[0]))
            out.append(("proj.b", self.proj[1]))
        return out

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        scope, pname = name.split(".")
        if scope == "proj":
            idx = 0 if pname == "w" else 1
            self.proj[idx] = value.astype(self.dtype)
        else:
            self.towers[scope].params[_PARAM_NAMES.index(pname)] = value.astype(self.dtype)

    def astype(self, dtype) -> "EmbedderModel":
        clone = object.__new__(EmbedderModel)
        clone.config = self.config
        clone.dtype = dtype
        clone.xyz_mean = self.xyz_mean.copy()
        clone.xyz_std = self.xyz_std.copy()
        clone.towers = {n: t.astype(dtype) for n, t in self.towers.items()}
        clone.proj = None if self.proj is None else [p.astype(dtype) for p in self.proj]
        return clone

    # -- forward / backward ----------------------------------------------

    def _inputs(self, frame: RgbdFrame) -> dict[str, np.ndarray]:
        if frame.height % 2 or frame.width % 2:
            raise ValueError("frame dimensions must be divisible by 2")
        rgb = frame.rgb.astype(self.dtype)
        xyz = ((frame.cloud - self.xyz_mean) / self.xyz_std).astype(self.dtype)
        mode = self.config.fusion
        if mode == "early":
            return {"main": np.concatenate([rgb, xyz], axis=2)}
        if mode == "rgb":
            return {"main": rgb}
        if mode == "depth":
            return {"main": xyz}
        return {"rgb": rgb, "depth": xyz}

    def forward_raw(self, frame: RgbdFrame) -> tuple[np.ndarray, dict]:
        inputs = self._inputs(frame)
        caches = {}
        outs = {}
        for name in sorted(self.towers):
            outs[name], caches[name] = self.towers[name].forward(inputs[name])
        mode = self.config.fusion
        if mode in ("early", "rgb", "depth"):
            raw = outs["main"]
        elif mode == "add":
            raw = outs["rgb"] + outs["depth"]
        else:
            cat = np.concatenate([outs["rgb"], outs["depth"]], axis=2)
            caches["cat"] = cat
            if self.proj is not None:
                raw = kernels.conv2d_forward(cat, self.proj[0], self.proj[1], 1)
            else:
                raw = cat
        return raw, caches

    def forward(self, frame: RgbdFrame) -> np.ndarray:
        """Unit-normalized embedding grid (H, W, C)."""
        raw, _ = self.forward_raw(frame)
        return normalize_embeddings(raw)

    def backward_from_cache(self, g: np.ndarray, caches: dict) -> dict[str, np.ndarray]:
        mode = self.config.fusion
        grads: dict[str, np.ndarray] = {}
        if mode in ("early", "rgb", "depth"):
            tower_gs = {"main": g}
        elif mode == "add":
            tower_gs = {"rgb": g, "depth": g}
        else:
            if self.proj is not None:
                cat = caches["cat"]
                gw, gb = kernels.conv2d_param_grad(cat, g, 1, 1)
                grads["proj.w"] = gw
                grads["proj.b"] = gb
                gcat = kernels.conv2d_input_grad(g, self.proj[0], 1, cat.shape[0], cat.shape[1])
            else:
                gcat = g
            c = self.config.dim
            tower_gs = {"rgb": gcat[:, :, :c], "depth": gcat[:, :, c:]}
        for name, tg in tower_gs.items():
            pgrads = self.towers[name].backward(np.ascontiguousarray(tg), caches[name])
            for pname, pg in zip(_PARAM_NAMES, pgrads):
                grads[f"{name}.{pname}"] = pg
        return grads

    def backward(self, frame: RgbdFrame, g: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients for an upstream gradient w.r.t. the raw output."""
        raw, caches = self.forward_raw(frame)
        if g.shape != raw.shape:
            raise ValueError(f"upstream gradient {g.shape} does not match output {raw.shape}")
        return self.backward_from_cache(g.astype(self.dtype), caches)


class Adam:
    """Bias-corrected adaptive-moment updates, applied in place."""

    def __init__(self, params: list[tuple[str, np.ndarray]], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v, dtype=np.float64) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v, dtype=np.float64) for k, v in self.params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = grads[name].astype(np.float64)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / b1c
            vhat = self.v[name] / b2c
            p -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)


def compute_xyz_stats(frames: list[RgbdFrame]) -> tuple[np.ndarray, np.ndarray]:
    clouds = np.concatenate([f.cloud.reshape(-1, 3).astype(np.float64) for f in frames])
    mean = clouds.mean(axis=0)
    std = np.maximum(clouds.std(axis=0), 1e-6)
    return mean.astype(np.float32), std.astype(np.float32)


@dataclass
class TrainResult:
    history: list[tuple[int, int, float, float, float]]  # (epoch, step, intra, inter, total)
    steps: int


def _as_pairs(dataset) -> list[tuple[RgbdFrame, np.ndarray]]:
    pairs = []
    for item in dataset:
        if isinstance(item, tuple):
            pairs.append(item)
        else:
            pairs.append((item.frame, item.truth))
    return pairs


def train(
    model: EmbedderModel,
    dataset,
    loss_cfg: LossConfig,
    max_steps: int | None = None,
) -> TrainResult:
    """Train in place on (frame, mask) pairs; deterministic for a fixed seed.

    Raises :class:`TrainingDivergedError` with a diagnostic snapshot if the
    loss stops being finite.
    """
    pairs = _as_pairs(dataset)
    if not pairs:
        raise ValueError("training dataset is empty")
    cfg = model.config
    model.xyz_mean, model.xyz_std = compute_xyz_stats([f for f, _ in pairs])

    order_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    seed_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 11]))
    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    history: list[tuple[int, int, float, float, float]] = []
    step = 0

    for epoch in range(cfg.epochs):
        order = order_rng.permutation(len(pairs))
        for lo in range(0, len(order), cfg.batch_size):
            chunk = order[lo : lo + cfg.batch_size]
            acc: dict[str, np.ndarray] = {}
            intra = inter = total = 0.0
            for j in chunk:
                frame, mask = pairs[j]
                raw, caches = model.forward_raw(frame)
                if not np.isfinite(raw).all():
                    # nan distances silently empty the margin indicator sets,
                    # so non-finite activations must abort before the loss
                    raise TrainingDivergedError(
                        f"non-finite activations at epoch {epoch} step {step}",
                        diagnostics={
                            "epoch": epoch,
                            "step": step,
                            "scene": int(j),
                            "param_norms": {
                                k: float(np.linalg.norm(v)) for k, v in model.parameters()
                            },
                        },
                    )
                item_cfg = replace(loss_cfg, seed=int(seed_rng.integers(2**62)))
                value, g_raw = total_loss_and_grad(raw, mask, item_cfg)
                grads = model.backward_from_cache(g_raw.astype(model.dtype), caches)
                for k, v in grads.items():
                    acc[k] = acc.get(k, 0.0) + v
                intra += value.intra
                inter += value.inter
                total += value.total
            scale = 1.0 / len(chunk)
            acc = {k: v * scale for k, v in acc.items()}
            intra, inter, total = intra * scale, inter * scale, total * scale
            if not np.isfinite(total):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} step {step}",
                    diagnostics={
                        "epoch": epoch,
                        "step": step,
                        "intra": intra,
                        "inter": inter,
                        "param_norms": {
                            k: float(np.linalg.norm(v)) for k, v in model.parameters()
                        },
                    },
                )
            opt.step(acc)
            history.append((epoch, step, intra, inter, total))
            step += 1
            if max_steps is not None and step >= max_steps:
                return TrainResult(history=history, steps=step)
    return TrainResult(history=history, steps=step)


def train_roi_model(model: EmbedderModel, dataset, loss_cfg: LossConfig, refine_cfg) -> TrainResult:
    """Train on zoomed crops: one padded, resized patch per labeled object.

    Same contract as :func:`train`; the crop geometry matches what refinement
    applies at inference, so patch statistics line up between the two.
    """
    from embedseg.refine import roi_training_crops

    crops = []
    for item in _as_pairs(dataset):
        crops.extend(roi_training_crops(item[0], item[1], refine_cfg))
    if not crops:
        raise ValueError("no labeled objects in the dataset, nothing to crop")
    return train(model, crops, loss_cfg)
