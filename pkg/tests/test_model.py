"""Tests for the end-to-end localizer."""

import pytest
import torch
from torch.func import functional_call

from core.encoders import EncoderConfig, StrideError
from core.model import ModelConfig, build_model, count_parameters
from data.geometry import BBox
from objective.losses import total_loss
from tests.fixtures.scenes import tiny_encoder


def _smooth_config() -> ModelConfig:
    encoder = EncoderConfig(
        stride=16,
        query_channels=(2, 2, 2, 4),
        reference_channels=(2, 2, 2, 4),
        embed_dim=4,
        activation="silu",
    )
    return ModelConfig(encoder=encoder, head_hidden=4, anchor=(16.0, 16.0), seed=3)


class TestModelConfig:
    """Tests for ModelConfig."""

    def test_dict_round_trip(self):
        """to_dict/from_dict restore the config."""
        config = ModelConfig(encoder=tiny_encoder(), anchor=(10, 20), use_mope=False)
        assert ModelConfig.from_dict(config.to_dict()) == config

    def test_head_input_channels(self):
        """The attention channel adds one head input."""
        assert ModelConfig().head_in_channels == 513
        assert ModelConfig(use_cvmf_concat=False).head_in_channels == 512

    def test_invalid_anchor(self):
        """A non-positive anchor is rejected."""
        with pytest.raises(ValueError):
            ModelConfig(anchor=(0, 10))


class TestParameterCount:
    """Tests for the closed-form parameter count."""

    @pytest.mark.parametrize(
        "overrides",
        [{}, {"use_mope": False}, {"use_cvmf_concat": False}],
    )
    def test_matches_module(self, overrides):
        """count_parameters equals the built model's parameter count."""
        config = ModelConfig(**overrides)
        model = build_model(config)
        assert count_parameters(config) == sum(p.numel() for p in model.parameters())

    def test_mope_parameters_named(self, tiny_model):
        """Position-encoding parameters live under mope.*."""
        names = {name for name, _ in tiny_model.named_parameters()}
        assert {"mope.fuse.weight", "mope.projection.weight"} <= names


class TestForward:
    """Tests for the batched forward pass and inference."""

    def test_shapes(self, tiny_model):
        """M objects over B pairs give (M, 5, H', W') and (M, H', W')."""
        query = torch.rand(2, 3, 32, 64)
        reference = torch.rand(2, 3, 64, 64)
        points = torch.tensor([[5.0, 5.0], [40.0, 20.0], [10.0, 30.0]])
        image_index = torch.tensor([0, 0, 1])
        output = tiny_model(query, reference, points, image_index)
        assert output.raw.shape == (3, 5, 4, 4)
        assert output.attention.shape == (3, 4, 4)
        assert output.image_size == (64, 64)
        assert float(output.attention.abs().max()) <= 1.0

    def test_localize_one_detection_per_click(self, tiny_model, small_pairs):
        """localize returns one in-bounds detection per click, in order."""
        pair = small_pairs[0]
        detections = tiny_model.localize(pair.query_image, pair.reference_image, pair.clicks)
        assert [d.object_index for d in detections] == list(range(pair.num_objects))
        width, height = pair.reference_size
        assert all(d.box.within(width, height) for d in detections)
        assert all(0.0 <= d.confidence <= 1.0 for d in detections)

    def test_click_permutation_equivariance(self, tiny_model, small_pairs):
        """Reversing the clicks reverses the detections."""
        pair = max(small_pairs, key=lambda p: p.num_objects)
        forward = tiny_model.localize(pair.query_image, pair.reference_image, pair.clicks)
        backward = tiny_model.localize(pair.query_image, pair.reference_image, pair.clicks[::-1])
        for a, b in zip(forward, reversed(backward)):
            assert a.cell == b.cell
            assert a.box.as_tuple() == pytest.approx(b.box.as_tuple(), abs=1e-4)

    def test_infer_restores_training_mode(self, tiny_model, small_pairs):
        """infer leaves the model in the mode it found it."""
        pair = small_pairs[0]
        tiny_model.train()
        _, maps = tiny_model.infer(pair.query_image, pair.reference_image, pair.clicks)
        assert tiny_model.training
        assert len(maps) == pair.num_objects

    def test_no_clicks_rejected(self, tiny_model, small_pairs):
        """localize needs at least one click."""
        pair = small_pairs[0]
        with pytest.raises(ValueError):
            tiny_model.localize(pair.query_image, pair.reference_image, [])

    def test_stride_mismatch_raises(self, tiny_model):
        """Images not divisible by the stride are rejected."""
        with pytest.raises(StrideError):
            tiny_model(
                torch.rand(1, 3, 32, 64),
                torch.rand(1, 3, 60, 64),
                torch.tensor([[1.0, 1.0]]),
                torch.tensor([0]),
            )

    def test_seeded_initialization(self, tiny_model_config):
        """Same seed gives identical parameters and leaves the global RNG alone."""
        state = torch.random.get_rng_state()
        a = build_model(tiny_model_config)
        b = build_model(tiny_model_config)
        assert torch.equal(torch.random.get_rng_state(), state)
        for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert torch.equal(pa, pb)


class TestGradients:
    """Gradient verification of the full objective."""

    def test_total_loss_gradients_match_finite_differences(self):
        """Analytic gradients of total_loss agree with central differences."""
        config = _smooth_config()
        model = build_model(config, torch.float64)
        assert count_parameters(config) <= 5000

        generator = torch.Generator().manual_seed(0)
        query = torch.rand(1, 3, 32, 32, generator=generator, dtype=torch.float64)
        reference = torch.rand(1, 3, 64, 64, generator=generator, dtype=torch.float64)
        points = torch.tensor([[5.0, 6.0], [22.0, 25.0]], dtype=torch.float64)
        image_index = torch.tensor([0, 0])
        gts = [BBox(20, 20, 16, 16), BBox(44, 40, 12, 20)]

        names = [name for name, _ in model.named_parameters()]
        params = tuple(p.detach().clone().requires_grad_(True) for _, p in model.named_parameters())

        def objective(*values):
            output = functional_call(model, dict(zip(names, values)), (query, reference, points, image_index))
            return total_loss(model.predictions(output), gts, output.attention, image_index).total

        assert torch.autograd.gradcheck(objective, params, eps=1e-5, atol=1e-8, rtol=1e-4)
