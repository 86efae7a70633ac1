"""Command-line pipeline driver.

Subcommands: ``gen`` (synthetic scenes), ``train`` (whole-image + RoI
models), ``segment`` (stage-one masks, optionally refined), ``eval``
(Hungarian-matched metrics to CSV), ``viz`` (feature maps and label
renders), ``bench`` (kernel backend comparison).

Exit codes: 0 success, 1 usage error, 2 runtime failure. Every subcommand is
deterministic given its configuration and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from embedseg import backend, bench, checkpoint, sceneio, viz
from embedseg.config import RunConfig, load_config
from embedseg.core import paint_embeddings
from embedseg.meanshift import segment_image
from embedseg.metrics import EvalReport, aggregate, evaluate_masks
from embedseg.network import EmbedderModel, TrainingDivergedError, train, train_roi_model
from embedseg.refine import refine_all
from embedseg.scenes import generate_scene

_EVAL_FIELDS = (
    "image", "overlap_p", "overlap_r", "overlap_f",
    "boundary_p", "boundary_r", "boundary_f",
    "percent75", "n_pred", "n_truth", "skipped",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage is 1 here
        raise UsageError(f"{self.prog}: {message}")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key=value configuration file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    parser.add_argument("--seed", type=int, help="override run.seed and scene.seed")
    parser.add_argument("--workers", type=int, help="kernel / per-scene worker count")


def _load(args, extra_file: Path | None = None) -> RunConfig:
    try:
        cfg = load_config(args.config, [])
        if extra_file is not None:
            cfg.update_from_file(extra_file)
        for item in args.set:
            key, _, raw = item.partition("=")
            cfg.set(key.strip(), raw.strip())
    except (ValueError, KeyError, OSError) as exc:
        raise UsageError(str(exc)) from None
    if args.seed is not None:
        cfg.set("run.seed", args.seed)
        cfg.set("scene.seed", args.seed)
    if args.workers is not None:
        cfg.set("run.workers", args.workers)
    return cfg


def _scene_seed(base: int, index: int) -> int:
    return int(np.random.default_rng(np.random.SeedSequence([base, index])).integers(2**62))


def _parallel(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _read_scenes(scene_dir: Path):
    stems = sceneio.list_scene_stems(scene_dir)
    if not stems:
        raise FileNotFoundError(f"no scenes found in {scene_dir}")
    return stems, [sceneio.read_scene(scene_dir, stem) for stem in stems]


def _write_history(path: Path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "intra", "inter", "total"])
        for epoch, step, intra, inter, total in history:
            writer.writerow([epoch, step, repr(intra), repr(inter), repr(total)])


# -- subcommands -----------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = _load(args, extra_file=args.spec)
    spec = cfg.scene_spec()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def one(index: int) -> dict:
        scene = generate_scene(spec, index)
        return sceneio.write_scene(out, index, scene)

    entries = _parallel(one, list(range(args.count)), cfg["run.workers"])
    # manifest commits last; it records the generating spec, not runtime knobs
    sceneio.write_manifest(out, entries, cfg.spec_fields("scene"))
    print(f"wrote {len(entries)} scenes to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    backend.set_workers(cfg["run.workers"])
    _, scenes = _read_scenes(Path(args.scenes))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    loss_cfg = cfg.loss_config()

    model = EmbedderModel(cfg.embedder_config(fusion=args.fusion))
    result = train(model, scenes, loss_cfg)
    checkpoint.save_model(model, out / "model.eseg")
    _write_history(out / "loss_history.csv", result.history)
    print(f"model: {result.steps} steps, final loss {result.history[-1][4]:.4f}")

    if not args.no_roi:
        roi_cfg = cfg.embedder_config(fusion=args.fusion, epochs=cfg["roi.epochs"])
        roi_model = EmbedderModel(replace(roi_cfg, seed=roi_cfg.seed + 1))
        roi_result = train_roi_model(roi_model, scenes, loss_cfg, cfg.refine_config())
        checkpoint.save_model(roi_model, out / "roi_model.eseg")
        _write_history(out / "roi_loss_history.csv", roi_result.history)
        print(f"roi model: {roi_result.steps} steps, "
              f"final loss {roi_result.history[-1][4]:.4f}")
    return 0


def cmd_segment(args) -> int:
    cfg = _load(args)
    backend.set_workers(cfg["run.workers"])
    if args.oracle and args.refine:
        raise UsageError("--oracle checks stage-one plumbing and cannot be combined with --refine")
    model = None
    if not args.oracle:
        if args.model is None:
            raise UsageError("--model is required unless --oracle is given")
        if not Path(args.model).exists():
            raise FileNotFoundError(f"model checkpoint not found: {args.model}")
        model = checkpoint.load_model(args.model)
    roi_model = None
    if args.refine:
        if args.roi_model is None:
            raise UsageError("--refine requires --roi-model")
        if not Path(args.roi_model).exists():
            raise FileNotFoundError(f"RoI checkpoint not found: {args.roi_model}")
        roi_model = checkpoint.load_model(args.roi_model)

    stems, scenes = _read_scenes(Path(args.scenes))
    out = Path(args.out)
    stage1_dir = out / "stage1"
    stage1_dir.mkdir(parents=True, exist_ok=True)
    if args.refine:
        refined_dir = out / "refined"
        refined_dir.mkdir(parents=True, exist_ok=True)
    if args.dump_embeddings:
        feat_dir = out / "features"
        feat_dir.mkdir(parents=True, exist_ok=True)

    ms_cfg = cfg.meanshift_config()
    refine_cfg = cfg.refine_config()
    base_seed = cfg["run.seed"]

    def one(item) -> None:
        index, (stem, (frame, truth)) = item
        grid = (
            paint_embeddings(truth, cfg["embedder.dim"])
            if args.oracle
            else model.forward(frame)
        )
        if args.dump_embeddings:
            sceneio.write_embedding(feat_dir / f"{stem}.esegf", grid)
        mask = segment_image(grid, ms_cfg, seed=_scene_seed(base_seed, index))
        sceneio.write_labels(stage1_dir / f"{stem}.labels.png", mask)
        if args.refine:
            refined = refine_all(frame, mask, roi_model, refine_cfg,
                                 seed=_scene_seed(base_seed + 1, index))
            sceneio.write_labels(refined_dir / f"{stem}.labels.png", refined)

    # Scenes run serially: the worker knob parallelizes inside the kernels,
    # which is the only entry into numba's thread pool that is safe here.
    for item in enumerate(zip(stems, scenes)):
        one(item)
    print(f"segmented {len(stems)} scenes into {out}")
    return 0


def _report_row(name: str, report: EvalReport, skipped: int = 0) -> dict:
    return {
        "image": name,
        "overlap_p": f"{report.overlap_p:.6f}",
        "overlap_r": f"{report.overlap_r:.6f}",
        "overlap_f": f"{report.overlap_f:.6f}",
        "boundary_p": f"{report.boundary_p:.6f}",
        "boundary_r": f"{report.boundary_r:.6f}",
        "boundary_f": f"{report.boundary_f:.6f}",
        "percent75": f"{report.percent75:.4f}",
        "n_pred": report.n_pred,
        "n_truth": report.n_truth,
        "skipped": skipped,
    }


def cmd_eval(args) -> int:
    cfg = _load(args)
    pred_dir, truth_dir = Path(args.pred), Path(args.truth)
    pred_names = {p.name for p in pred_dir.glob("*.labels.png")}
    truth_names = {p.name for p in truth_dir.glob("*.labels.png")}
    common = sorted(pred_names & truth_names)
    skipped = sorted(pred_names ^ truth_names)
    for name in skipped:
        side = "pred" if name in pred_names else "truth"
        print(f"warning: {name} present only in {side} directory, skipped", file=sys.stderr)
    if not common:
        raise FileNotFoundError("no matching mask filenames between pred and truth")

    tol = cfg["metrics.boundary_tolerance"]

    def one(name: str):
        pred = sceneio.read_labels(pred_dir / name)
        truth = sceneio.read_labels(truth_dir / name)
        return name, evaluate_masks(pred, truth, tol)

    reports = _parallel(one, common, cfg["run.workers"])
    agg = aggregate([r for _, r in reports], pooled=args.pooled)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_EVAL_FIELDS)
        writer.writeheader()
        for name, rep in reports:
            writer.writerow(_report_row(name, rep))
        writer.writerow(_report_row("(aggregate)", agg, skipped=len(skipped)))
    print(
        f"images {len(reports)}  skipped {len(skipped)}\n"
        f"overlap  P {agg.overlap_p:.4f}  R {agg.overlap_r:.4f}  F {agg.overlap_f:.4f}\n"
        f"boundary P {agg.boundary_p:.4f}  R {agg.boundary_r:.4f}  F {agg.boundary_f:.4f}\n"
        f"%75 {agg.percent75:.2f}"
    )
    return 0


def cmd_viz(args) -> int:
    modes = [m for m in (args.embedding, args.mask, args.model) if m is not None]
    if len(modes) != 1:
        raise UsageError("pick exactly one of --embedding, --mask, or --model with --scenes")
    out = Path(args.out)
    if args.embedding is not None:
        grid = sceneio.read_embedding(Path(args.embedding))
        viz.save_image(out, viz.feature_map_image(grid))
        print(f"wrote {out}")
        return 0
    if args.mask is not None:
        mask = sceneio.read_labels(Path(args.mask))
        viz.save_image(out, viz.label_image(mask))
        print(f"wrote {out}")
        return 0
    if args.scenes is None:
        raise UsageError("--model requires --scenes")
    model = checkpoint.load_model(args.model)
    stems, scenes = _read_scenes(Path(args.scenes))
    out.mkdir(parents=True, exist_ok=True)
    for stem, (frame, _) in zip(stems, scenes):
        grid = model.forward(frame)
        viz.save_image(out / f"{stem}.features.png", viz.feature_map_image(grid))
    print(f"wrote {len(stems)} feature maps to {out}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load(args)
    workers = cfg["run.workers"] if args.workers is None else args.workers
    counts = tuple(sorted({1, max(1, workers)}))
    rows = []
    if args.op in ("cluster", "all"):
        rows += bench.run_cluster_bench(
            h=args.size, w=args.size, c=args.dim,
            worker_counts=counts, repeats=args.repeats,
        )
    if args.op in ("conv", "all"):
        rows += bench.run_conv_bench(h=args.size, w=args.size, repeats=args.repeats)
    print(bench.format_rows(rows))
    top = min(max(counts), backend.max_workers())
    if top > 1:
        speedup = bench.scaling(rows, top)
        if speedup is not None:
            print(f"numba clustering scaling at {top} workers: {speedup:.2f}x")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="embedseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic scenes")
    _add_common(p)
    p.add_argument("--spec", type=Path, help="scene configuration file (same format as --config)")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train whole-image and RoI embedding models")
    _add_common(p)
    p.add_argument("--scenes", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--fusion", choices=("early", "add", "concat", "rgb", "depth"))
    p.add_argument("--no-roi", action="store_true", help="skip the RoI model")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="predict masks for a scene directory")
    _add_common(p)
    p.add_argument("--scenes", type=Path, required=True)
    p.add_argument("--model", type=Path)
    p.add_argument("--roi-model", type=Path)
    p.add_argument("--refine", action="store_true")
    p.add_argument("--oracle", action="store_true",
                   help="cluster ground-truth painted embeddings instead of a model")
    p.add_argument("--dump-embeddings", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    _add_common(p)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="CSV report path")
    p.add_argument("--pooled", action="store_true",
                   help="aggregate by pooled pixel counts instead of per-image means")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("viz", help="render feature maps or label masks")
    _add_common(p)
    p.add_argument("--embedding", type=Path)
    p.add_argument("--mask", type=Path)
    p.add_argument("--model", type=Path)
    p.add_argument("--scenes", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("bench", help="compare kernel backends and worker counts")
    _add_common(p)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--op", choices=("cluster", "conv", "all"), default="all")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        print(json.dumps(exc.diagnostics, indent=2, default=str), file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures surface with context, exit 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
