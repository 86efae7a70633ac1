"""Run configuration: flat key=value files with section prefixes.

Example file::

    # clustering
    meanshift.kappa = 20
    meanshift.epsilon = 0.04
    loss.alpha = 0.02
    embedder.fusion = add

Values are coerced by a typed key table; unknown keys are rejected. Command
line ``--set section.key=value`` overrides win over the file, and dedicated
flags (``--seed``, ``--fusion``, ...) win over both.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from embedseg.loss import LossConfig
from embedseg.meanshift import MeanShiftConfig
from embedseg.network import EmbedderConfig
from embedseg.refine import RefineConfig
from embedseg.scenes import SceneSpec


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


# key -> (coercion, default)
_SCHEMA: dict[str, tuple] = {
    "scene.height": (int, 64),
    "scene.width": (int, 64),
    "scene.min_objects": (int, 3),
    "scene.max_objects": (int, 7),
    "scene.table_depth": (float, 1.0),
    "scene.min_height": (float, 0.015),
    "scene.max_height": (float, 0.06),
    "scene.rgb_noise": (float, 0.05),
    "scene.depth_noise": (float, 0.002),
    "scene.min_visible_pixels": (int, 64),
    "scene.seed": (int, 0),
    "loss.alpha": (float, 0.02),
    "loss.delta": (float, 0.5),
    "loss.weight_intra": (float, 1.0),
    "loss.weight_inter": (float, 1.0),
    "loss.samples_per_object": (int, 1000),
    "embedder.fusion": (str, "add"),
    "embedder.dim": (int, 16),
    "embedder.widths": (_parse_int_tuple, (16, 32, 32)),
    "embedder.learning_rate": (float, 1e-3),
    "embedder.epochs": (int, 30),
    "embedder.batch_size": (int, 4),
    "embedder.concat_project": (_parse_bool, True),
    "roi.size": (int, 64),
    "roi.padding": (float, 0.25),
    "roi.keep_overlap": (float, 0.5),
    "roi.epochs": (int, 4),
    "meanshift.kappa": (float, 20.0),
    "meanshift.epsilon": (float, 0.04),
    "meanshift.seeds": (int, 100),
    "meanshift.iterations": (int, 10),
    "meanshift.min_cluster_size": (int, 32),
    "metrics.boundary_tolerance": (int, 1),
    "run.seed": (int, 0),
    "run.workers": (int, 1),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = {k: default for k, (_, default) in _SCHEMA.items()}
        merged.update(self.values)
        self.values = merged

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, raw) -> None:
        if key not in _SCHEMA:
            raise KeyError(f"unknown configuration key {key!r}")
        coerce = _SCHEMA[key][0]
        self.values[key] = coerce(raw) if isinstance(raw, str) else raw

    def update_from_file(self, path: str | Path) -> None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = stripped.partition("=")
            try:
                self.set(key.strip(), raw.strip())
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: {exc.args[0]}") from None

    # -- typed views -------------------------------------------------------

    def scene_spec(self) -> SceneSpec:
        v = self.values
        return SceneSpec(
            height=v["scene.height"],
            width=v["scene.width"],
            min_objects=v["scene.min_objects"],
            max_objects=v["scene.max_objects"],
            table_depth=v["scene.table_depth"],
            min_height=v["scene.min_height"],
            max_height=v["scene.max_height"],
            rgb_noise=v["scene.rgb_noise"],
            depth_noise=v["scene.depth_noise"],
            min_visible_pixels=v["scene.min_visible_pixels"],
            seed=v["scene.seed"],
        )

    def loss_config(self, seed: int = 0) -> LossConfig:
        v = self.values
        return LossConfig(
            alpha=v["loss.alpha"],
            delta=v["loss.delta"],
            weight_intra=v["loss.weight_intra"],
            weight_inter=v["loss.weight_inter"],
            samples_per_object=v["loss.samples_per_object"],
            seed=seed,
        )

    def embedder_config(self, fusion: str | None = None, epochs: int | None = None) -> EmbedderConfig:
        v = self.values
        return EmbedderConfig(
            fusion=fusion if fusion is not None else v["embedder.fusion"],
            dim=v["embedder.dim"],
            widths=tuple(v["embedder.widths"]),
            learning_rate=v["embedder.learning_rate"],
            epochs=epochs if epochs is not None else v["embedder.epochs"],
            batch_size=v["embedder.batch_size"],
            seed=v["run.seed"],
            concat_project=v["embedder.concat_project"],
        )

    def meanshift_config(self) -> MeanShiftConfig:
        v = self.values
        return MeanShiftConfig(
            kappa=v["meanshift.kappa"],
            epsilon=v["meanshift.epsilon"],
            seeds=v["meanshift.seeds"],
            iterations=v["meanshift.iterations"],
            min_cluster_size=v["meanshift.min_cluster_size"],
        )

    def refine_config(self) -> RefineConfig:
        v = self.values
        return RefineConfig(
            roi_size=v["roi.size"],
            padding=v["roi.padding"],
            keep_overlap=v["roi.keep_overlap"],
            cluster=self.meanshift_config(),
        )

    def spec_fields(self, section: str | None = None) -> dict:
        """Plain-JSON view of the configuration, optionally one section."""
        items = sorted(self.values.items())
        if section is not None:
            prefix = section + "."
            items = [(k, v) for k, v in items if k.startswith(prefix)]
        return {k: list(v) if isinstance(v, tuple) else v for k, v in items}


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, then the file, then ``section.key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        cfg.update_from_file(path)
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"override must look like section.key=value, got {item!r}")
        key, _, raw = item.partition("=")
        cfg.set(key.strip(), raw.strip())
    return cfg
