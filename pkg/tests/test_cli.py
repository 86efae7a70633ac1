import csv

import numpy as np
import pytest

from embedseg import sceneio
from embedseg.cli import main
from embedseg.metrics import evaluate_masks
from embedseg.viz import label_image

TINY = [
    "--set", "scene.height=32", "--set", "scene.width=32",
    "--set", "scene.min_visible_pixels=16",
    "--set", "scene.min_objects=2", "--set", "scene.max_objects=3",
]
TINY_MODEL = [
    "--set", "embedder.dim=8", "--set", "embedder.widths=6,8,8",
    "--set", "embedder.epochs=4", "--set", "roi.epochs=2",
    "--set", "roi.size=32", "--set", "meanshift.min_cluster_size=16",
]


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenes")
    assert main(["gen", "--count", "4", "--out", str(out), "--seed", "17", *TINY]) == 0
    return out


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory, scene_dir):
    out = tmp_path_factory.mktemp("models")
    rc = main([
        "train", "--scenes", str(scene_dir), "--out", str(out),
        "--seed", "17", *TINY, *TINY_MODEL,
    ])
    assert rc == 0
    return out


class TestGen:
    def test_writes_files_and_manifest(self, scene_dir):
        files = sorted(p.name for p in scene_dir.iterdir())
        assert "manifest.json" in files
        assert len([f for f in files if f != "manifest.json"]) == 4 * 4
        manifest = sceneio.read_manifest(scene_dir)
        assert manifest["count"] == 4
        assert len(manifest["scenes"]) == 4

    def test_rerun_byte_identical(self, scene_dir, tmp_path):
        again = tmp_path / "again"
        assert main(["gen", "--count", "4", "--out", str(again), "--seed", "17", *TINY]) == 0
        for p in sorted(scene_dir.iterdir()):
            assert (again / p.name).read_bytes() == p.read_bytes(), p.name

    def test_flags_beat_set_overrides(self, tmp_path):
        # --seed must win over --set run.seed / scene.seed
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(["gen", "--count", "1", "--out", str(a),
                     "--set", "scene.seed=1", "--seed", "9", *TINY]) == 0
        assert main(["gen", "--count", "1", "--out", str(b), "--seed", "9", *TINY]) == 0
        for p in sorted(a.iterdir()):
            assert (b / p.name).read_bytes() == p.read_bytes()

    def test_workers_do_not_change_output(self, tmp_path):
        a = tmp_path / "w1"
        b = tmp_path / "w2"
        assert main(["gen", "--count", "3", "--out", str(a), "--seed", "4",
                     "--workers", "1", *TINY]) == 0
        assert main(["gen", "--count", "3", "--out", str(b), "--seed", "4",
                     "--workers", "2", *TINY]) == 0
        for p in sorted(a.iterdir()):
            assert (b / p.name).read_bytes() == p.read_bytes()

    def test_spec_file_equivalent_to_sets(self, tmp_path):
        spec_file = tmp_path / "scene.cfg"
        spec_file.write_text(
            "scene.height = 32\nscene.width = 32\nscene.min_visible_pixels = 16\n"
            "scene.min_objects = 2\nscene.max_objects = 3\n"
        )
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(["gen", "--count", "2", "--out", str(a), "--seed", "3", *TINY]) == 0
        assert main(["gen", "--spec", str(spec_file), "--count", "2", "--out", str(b), "--seed", "3"]) == 0
        for p in sorted(a.iterdir()):
            assert (b / p.name).read_bytes() == p.read_bytes()


class TestTrain:
    def test_checkpoints_and_history_written(self, model_dir):
        assert (model_dir / "model.eseg").exists()
        assert (model_dir / "roi_model.eseg").exists()
        with open(model_dir / "loss_history.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) >= 4
        steps = [int(r["step"]) for r in rows]
        assert steps == list(range(len(rows)))  # every step recorded

    def test_checkpoint_roundtrip_bit_exact(self, model_dir, tmp_path):
        from embedseg.checkpoint import load_model, save_model

        model = load_model(model_dir / "model.eseg")
        save_model(model, tmp_path / "again.eseg")
        assert (tmp_path / "again.eseg").read_bytes() == (model_dir / "model.eseg").read_bytes()

    def test_divergence_exits_nonzero_with_diagnostics(self, scene_dir, tmp_path, capsys):
        rc = main([
            "train", "--scenes", str(scene_dir), "--out", str(tmp_path / "m"),
            "--seed", "17", "--set", "embedder.learning_rate=1e9", *TINY, *TINY_MODEL,
        ])
        assert rc == 2
        err = capsys.readouterr().err
        assert "diverged" in err
        assert "param_norms" in err


class TestSegment:
    def test_oracle_masks_match_truth(self, scene_dir, tmp_path):
        out = tmp_path / "pred"
        rc = main([
            "segment", "--scenes", str(scene_dir), "--oracle",
            "--out", str(out), "--seed", "5", *TINY, *TINY_MODEL,
        ])
        assert rc == 0
        for stem in sceneio.list_scene_stems(scene_dir):
            truth = sceneio.read_labels(scene_dir / f"{stem}.labels.png")
            pred = sceneio.read_labels(out / "stage1" / f"{stem}.labels.png")
            rep = evaluate_masks(pred, truth)
            assert rep.overlap_f == 1.0, stem

    def test_refine_writes_second_mask(self, scene_dir, model_dir, tmp_path):
        out = tmp_path / "pred"
        rc = main([
            "segment", "--scenes", str(scene_dir),
            "--model", str(model_dir / "model.eseg"),
            "--roi-model", str(model_dir / "roi_model.eseg"),
            "--refine", "--dump-embeddings",
            "--out", str(out), "--seed", "5", *TINY, *TINY_MODEL,
        ])
        assert rc == 0
        stems = sceneio.list_scene_stems(scene_dir)
        for stem in stems:
            assert (out / "stage1" / f"{stem}.labels.png").exists()
            assert (out / "refined" / f"{stem}.labels.png").exists()
            assert (out / "features" / f"{stem}.esegf").exists()

    def test_rerun_identical(self, scene_dir, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            rc = main([
                "segment", "--scenes", str(scene_dir), "--oracle",
                "--out", str(out), "--seed", "5", *TINY, *TINY_MODEL,
            ])
            assert rc == 0
        for p in sorted((a / "stage1").iterdir()):
            assert (b / "stage1" / p.name).read_bytes() == p.read_bytes()

    def test_missing_checkpoint_is_runtime_error(self, scene_dir, tmp_path):
        rc = main([
            "segment", "--scenes", str(scene_dir),
            "--model", str(tmp_path / "nope.eseg"), "--out", str(tmp_path / "x"),
        ])
        assert rc == 2

    def test_oracle_refine_conflict_is_usage_error(self, scene_dir, tmp_path):
        rc = main([
            "segment", "--scenes", str(scene_dir), "--oracle", "--refine",
            "--out", str(tmp_path / "x"),
        ])
        assert rc == 1


class TestEval:
    def _write_mask(self, path, arr):
        sceneio.write_labels(path, np.asarray(arr, dtype=np.int32))

    def test_perfect_prediction_aggregate(self, scene_dir, tmp_path):
        report = tmp_path / "report.csv"
        rc = main([
            "eval", "--pred", str(scene_dir), "--truth", str(scene_dir),
            "--out", str(report),
        ])
        assert rc == 0
        with open(report) as fh:
            rows = list(csv.DictReader(fh))
        agg = rows[-1]
        assert agg["image"] == "(aggregate)"
        assert float(agg["overlap_f"]) == 1.0
        assert float(agg["boundary_f"]) == 1.0
        assert float(agg["percent75"]) == 100.0

    def test_hand_built_case(self, tmp_path):
        pred_dir = tmp_path / "pred"
        truth_dir = tmp_path / "truth"
        pred_dir.mkdir()
        truth_dir.mkdir()
        truth = [[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 2, 2], [0, 0, 2, 2]]
        pred = [[1, 1, 0, 0], [1, 0, 0, 0], [0, 0, 3, 3], [0, 0, 3, 3]]
        self._write_mask(truth_dir / "a.labels.png", truth)
        self._write_mask(pred_dir / "a.labels.png", pred)
        report = tmp_path / "r.csv"
        assert main(["eval", "--pred", str(pred_dir), "--truth", str(truth_dir),
                     "--out", str(report)]) == 0
        with open(report) as fh:
            row = list(csv.DictReader(fh))[0]
        # intersections 3 + 4 over 7 predicted and 8 truth pixels
        assert float(row["overlap_p"]) == pytest.approx(1.0)
        assert float(row["overlap_r"]) == pytest.approx(0.875)
        assert float(row["overlap_f"]) == pytest.approx(2 * 0.875 / 1.875)
        assert float(row["boundary_f"]) == pytest.approx(1.0)
        assert float(row["percent75"]) == 100.0

    def test_mismatched_names_skipped_with_count(self, tmp_path, capsys):
        pred_dir = tmp_path / "pred"
        truth_dir = tmp_path / "truth"
        pred_dir.mkdir()
        truth_dir.mkdir()
        m = [[0, 1], [1, 1]]
        self._write_mask(pred_dir / "a.labels.png", m)
        self._write_mask(truth_dir / "a.labels.png", m)
        self._write_mask(truth_dir / "only_truth.labels.png", m)
        report = tmp_path / "r.csv"
        assert main(["eval", "--pred", str(pred_dir), "--truth", str(truth_dir),
                     "--out", str(report)]) == 0
        err = capsys.readouterr().err
        assert "only_truth.labels.png" in err
        with open(report) as fh:
            agg = list(csv.DictReader(fh))[-1]
        assert int(agg["skipped"]) == 1

    def test_no_common_files_is_runtime_error(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir()
        b.mkdir()
        assert main(["eval", "--pred", str(a), "--truth", str(b),
                     "--out", str(tmp_path / "r.csv")]) == 2


class TestViz:
    def test_constant_embedding_renders_mid_gray(self, tmp_path):
        grid = np.ones((8, 8, 6), dtype=np.float32)
        sceneio.write_embedding(tmp_path / "f.esegf", grid)
        out = tmp_path / "f.png"
        assert main(["viz", "--embedding", str(tmp_path / "f.esegf"), "--out", str(out)]) == 0
        img = sceneio.read_rgb(out)
        np.testing.assert_allclose(img * 255, 128, atol=0.5)

    def test_three_channels_pass_through_normalized(self, tmp_path):
        rng = np.random.default_rng(0)
        grid = rng.uniform(0, 1, (8, 8, 3)).astype(np.float32)
        sceneio.write_embedding(tmp_path / "f.esegf", grid)
        out = tmp_path / "f.png"
        assert main(["viz", "--embedding", str(tmp_path / "f.esegf"), "--out", str(out)]) == 0
        img = np.asarray(sceneio.read_rgb(out) * 255, dtype=np.float64)
        expect = np.round((grid - grid.min()) / (grid.max() - grid.min()) * 255)
        np.testing.assert_allclose(img, expect, atol=1.0)

    def test_palette_stable_across_masks(self, tmp_path):
        a = np.array([[0, 1], [2, 3]], dtype=np.int32)
        b = np.array([[3, 3], [1, 0]], dtype=np.int32)
        ia = label_image(a)
        ib = label_image(b)
        assert np.array_equal(ia[0, 1], ib[1, 0])  # label 1
        assert np.array_equal(ia[1, 1], ib[0, 0])  # label 3
        assert np.array_equal(ia[0, 0], [0, 0, 0])  # background black

    def test_mask_render_cli(self, scene_dir, tmp_path):
        stem = sceneio.list_scene_stems(scene_dir)[0]
        out = tmp_path / "m.png"
        assert main(["viz", "--mask", str(scene_dir / f"{stem}.labels.png"),
                     "--out", str(out)]) == 0
        assert out.exists()

    def test_model_feature_maps_cli(self, scene_dir, model_dir, tmp_path):
        out = tmp_path / "viz"
        assert main(["viz", "--model", str(model_dir / "model.eseg"),
                     "--scenes", str(scene_dir), "--out", str(out)]) == 0
        stems = sceneio.list_scene_stems(scene_dir)
        assert sorted(p.name for p in out.iterdir()) == [
            f"{s}.features.png" for s in stems
        ]


class TestUsageErrors:
    def test_unknown_config_key(self, tmp_path):
        assert main(["gen", "--count", "1", "--out", str(tmp_path / "x"),
                     "--set", "scene.bogus=1"]) == 1

    def test_viz_requires_exactly_one_mode(self, tmp_path):
        assert main(["viz", "--out", str(tmp_path / "x.png")]) == 1

    def test_bad_flag_value(self, tmp_path):
        assert main(["train", "--scenes", str(tmp_path), "--out", str(tmp_path),
                     "--fusion", "magic"]) == 1
