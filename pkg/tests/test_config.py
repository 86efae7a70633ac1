import pytest

from embedseg.config import RunConfig, load_config


class TestConfigFile:
    def test_defaults_present(self):
        cfg = RunConfig()
        assert cfg["meanshift.kappa"] == 20.0
        assert cfg["meanshift.epsilon"] == pytest.approx(0.04)  # 2 * alpha
        assert cfg["loss.alpha"] == 0.02
        assert cfg["loss.delta"] == 0.5
        assert cfg["loss.samples_per_object"] == 1000
        assert cfg["meanshift.seeds"] == 100
        assert cfg["meanshift.iterations"] == 10

    def test_file_overrides_defaults(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# clustering\n"
            "meanshift.kappa = 35\n"
            "embedder.widths = 8,12,12\n"
            "embedder.concat_project = false\n"
        )
        cfg = load_config(path)
        assert cfg["meanshift.kappa"] == 35.0
        assert cfg["embedder.widths"] == (8, 12, 12)
        assert cfg["embedder.concat_project"] is False

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("meanshift.kappa = 35\n")
        cfg = load_config(path, overrides=["meanshift.kappa=50"])
        assert cfg["meanshift.kappa"] == 50.0

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("meanshift.bandwidth = 3\n")
        with pytest.raises(ValueError):
            load_config(path)

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("this is not a setting\n")
        with pytest.raises(ValueError):
            load_config(path)

    def test_typed_views_consistent(self):
        cfg = load_config(None, overrides=["embedder.fusion=concat", "run.seed=9"])
        assert cfg.embedder_config().fusion == "concat"
        assert cfg.embedder_config().seed == 9
        assert cfg.embedder_config(fusion="rgb").fusion == "rgb"  # flag wins
        assert cfg.meanshift_config().kappa == 20.0
        assert cfg.refine_config().cluster.kappa == 20.0
        assert cfg.loss_config(seed=3).seed == 3
        assert cfg.scene_spec().height == 64
