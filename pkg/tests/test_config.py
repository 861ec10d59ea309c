"""Tests for the training configuration."""

import pytest
import torch

from core.encoders import EncoderConfig
from pipeline.config import TrainConfig


class TestValidation:
    """Tests for TrainConfig.validate."""

    def test_defaults_valid(self):
        """Default config validates and follows the reference schedule."""
        config = TrainConfig()
        config.validate()
        assert (config.learning_rate, config.batch_size, config.epochs) == (1e-4, 8, 24)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"batch_size": 0},
            {"epochs": 0},
            {"learning_rate": -1.0},
            {"max_steps": 0},
            {"anchor": (0.0, 10.0)},
            {"activation": "gelu"},
            {"dtype": "float16"},
            {"negative_aggregation": "max"},
            {"similarity_reduction": "max"},
            {"query_channels": (8, 8, 8)},
        ],
    )
    def test_invalid_values(self, overrides):
        """Out-of-range values are rejected."""
        with pytest.raises(ValueError):
            TrainConfig(**overrides).validate()

    def test_model_config_needs_resolved_anchor(self):
        """An "auto" anchor must be resolved before building the model."""
        with pytest.raises(ValueError, match="auto"):
            TrainConfig().model_config()
        assert TrainConfig().model_config((20.0, 30.0)).anchor == (20.0, 30.0)

    def test_derived_configs(self):
        """Encoder, model and objective configs follow the flat fields."""
        config = TrainConfig(embed_dim=64, use_mope=False, use_similarity_loss=False, dtype="float64")
        assert config.encoder_config() == EncoderConfig(embed_dim=64)
        assert config.model_config((8.0, 8.0)).use_mope is False
        assert config.objective_config().use_similarity_loss is False
        assert config.torch_dtype == torch.float64


class TestConfigFile:
    """Tests for the key = value file format."""

    def test_round_trip(self, tmp_path):
        """to_file/from_file restore the config."""
        config = TrainConfig(
            learning_rate=3e-4,
            anchor=(24.0, 18.5),
            query_channels=(8, 8, 16, 32),
            use_cvmf_concat=False,
            max_steps=300,
        )
        assert TrainConfig.from_file(config.to_file(tmp_path / "cfg.txt")) == config

    def test_comments_and_partial_keys(self, tmp_path):
        """Comments and blank lines are ignored; missing keys keep defaults."""
        path = tmp_path / "cfg.txt"
        path.write_text("# run\n\nlearning_rate = 0.001  # faster\nanchor = auto\nmax_steps = none\n")
        config = TrainConfig.from_file(path)
        assert config.learning_rate == 0.001
        assert config.anchor == "auto"
        assert config.max_steps is None
        assert config.batch_size == 8

    def test_unknown_key_names_line(self, tmp_path):
        """An unknown key raises with path:line."""
        path = tmp_path / "cfg.txt"
        path.write_text("batch_size = 4\nmomentum = 0.9\n")
        with pytest.raises(ValueError, match=r"cfg.txt:2: unknown config key 'momentum'"):
            TrainConfig.from_file(path)

    def test_bad_value(self, tmp_path):
        """Unparsable values raise naming the key."""
        path = tmp_path / "cfg.txt"
        path.write_text("use_mope = maybe\n")
        with pytest.raises(ValueError, match="use_mope"):
            TrainConfig.from_file(path)

    def test_sample_configs_load(self):
        """The shipped configs are valid."""
        from pathlib import Path

        root = Path(__file__).parent.parent / "configs"
        overfit = TrainConfig.from_file(root / "overfit.txt")
        assert overfit.max_steps == 300
        TrainConfig.from_file(root / "default.txt")

    def test_overfit_config_plans_full_budget(self):
        """The overfit config runs its whole 300-step budget on 32 pairs."""
        from pathlib import Path

        from pipeline.trainer import Trainer

        config = TrainConfig.from_file(Path(__file__).parent.parent / "configs" / "overfit.txt")
        assert Trainer(config).planned_steps(32) == 300
        assert config.objective_config().similarity_reduction == "mean"


class TestFromEnv:
    """Tests for environment overrides."""

    def test_overrides_applied(self, monkeypatch, tmp_path):
        """MOGEO_* variables override file values."""
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("MOGEO_SEED", "7")
        monkeypatch.setenv("MOGEO_MAX_STEPS", "12")
        monkeypatch.setenv("MOGEO_LOG_LEVEL", "debug")
        config = TrainConfig.from_env()
        assert (config.seed, config.max_steps, config.log_level) == (7, 12, "DEBUG")

    def test_no_overrides(self, monkeypatch, tmp_path):
        """Without variables the defaults stand."""
        monkeypatch.chdir(tmp_path)
        for name in ("MOGEO_SEED", "MOGEO_MAX_STEPS", "MOGEO_LOG_LEVEL"):
            monkeypatch.delenv(name, raising=False)
        assert TrainConfig.from_env() == TrainConfig()
