"""Tests for checkpoint archives."""

import pytest
import torch

from core.model import ModelConfig, build_model
from data.geometry import BBox
from pipeline.checkpoint import (
    CHECKPOINT_HEADER,
    CheckpointMismatchError,
    check_compatible,
    load_checkpoint,
    save_checkpoint,
)
from tests.fixtures.scenes import make_pair, tiny_encoder, tiny_train_config


def _inputs():
    generator = torch.Generator().manual_seed(0)
    return (
        torch.rand(1, 3, 32, 64, generator=generator),
        torch.rand(1, 3, 64, 64, generator=generator),
        torch.tensor([[5.0, 5.0], [40.0, 20.0]]),
        torch.tensor([0, 0]),
    )


class TestCheckpointRoundTrip:
    """Tests for save_checkpoint / load_checkpoint."""

    def test_forward_bit_identical(self, tmp_path, tiny_model):
        """A reloaded model reproduces the forward outputs exactly."""
        inputs = _inputs()
        before = tiny_model(*inputs)
        path = save_checkpoint(tmp_path / "ckpt.pt", tiny_model, tiny_train_config(), step=5)
        restored = load_checkpoint(path).build()
        after = restored(*inputs)
        assert torch.equal(before.raw, after.raw)
        assert torch.equal(before.attention, after.attention)

    def test_metadata_restored(self, tmp_path, tiny_model):
        """Configs, step and RNG state come back."""
        config = tiny_train_config(seed=4)
        path = save_checkpoint(tmp_path / "ckpt.pt", tiny_model, config, step=17)
        ckpt = load_checkpoint(path)
        assert ckpt.model_config == tiny_model.config
        assert ckpt.train_config == config
        assert ckpt.step == 17
        assert ckpt.rng_state is not None
        assert any(name.startswith("mope.") for name in ckpt.state_dict)

    def test_rng_state_restored(self, tmp_path, tiny_model):
        """After restore_rng_state the global generator continues from save time."""
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(11)
            path = save_checkpoint(tmp_path / "ckpt.pt", tiny_model, tiny_train_config())
            expected = torch.rand(4)
            torch.rand(100)
            load_checkpoint(path).restore_rng_state()
            assert torch.equal(torch.rand(4), expected)

    def test_missing_rng_state_rejected(self, tmp_path, tiny_model):
        """A checkpoint without RNG state cannot restore one."""
        ckpt = load_checkpoint(save_checkpoint(tmp_path / "ckpt.pt", tiny_model, tiny_train_config()))
        ckpt.rng_state = None
        with pytest.raises(CheckpointMismatchError):
            ckpt.restore_rng_state()

    def test_float64_model(self, tmp_path, tiny_model_config):
        """The saved dtype is restored."""
        model = build_model(tiny_model_config, torch.float64)
        path = save_checkpoint(tmp_path / "ckpt.pt", model, tiny_train_config(dtype="float64"))
        assert next(load_checkpoint(path).build().parameters()).dtype == torch.float64


class TestCheckpointErrors:
    """Tests for mismatch handling."""

    def test_missing_file(self, tmp_path):
        """A missing archive raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "none.pt")

    def test_wrong_header(self, tmp_path):
        """A foreign archive is rejected."""
        path = tmp_path / "other.pt"
        torch.save({"header": "something-else"}, path)
        with pytest.raises(CheckpointMismatchError, match=CHECKPOINT_HEADER):
            load_checkpoint(path)

    def test_parameters_must_fit_config(self, tmp_path, tiny_model):
        """Parameters of another architecture are rejected on build."""
        path = save_checkpoint(tmp_path / "ckpt.pt", tiny_model, tiny_train_config())
        ckpt = load_checkpoint(path)
        ckpt.model_config = ModelConfig(encoder=tiny_encoder(), head_hidden=16)
        with pytest.raises(CheckpointMismatchError):
            ckpt.build()

    def test_data_stride_check(self, tiny_model_config):
        """Images not divisible by the stride do not fit the model."""
        check_compatible(tiny_model_config, [make_pair([BBox(8, 8, 8, 8)])])
        bad = make_pair([BBox(8, 8, 8, 8)], reference_size=(72, 64))
        with pytest.raises(CheckpointMismatchError, match="not divisible"):
            check_compatible(tiny_model_config, [bad])
