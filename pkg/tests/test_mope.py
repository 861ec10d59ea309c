"""Tests for the multi-object position encoding."""

import numpy as np
import pytest
import torch

from core.encoders import FeatureMap
from core.mope import (
    ImpulseMask,
    MultiObjectPositionEncoder,
    build_mask,
    encode_objects,
    fuse_position,
    hot_cell,
    impulse_masks,
    pool_to_vector,
    sharpen,
)
from data.geometry import ClickPoint


class TestImpulseMask:
    """Tests for one-hot masks."""

    def test_example_cell(self):
        """A click at (35, 250) on a 16x16 grid of stride 16 lands in (15, 2)."""
        mask = build_mask(ClickPoint(x=35, y=250), (16, 16), 16)
        assert mask.hot_cell == (15, 2)
        assert mask.values.sum() == 1

    def test_random_masks_are_one_hot(self):
        """Every mask sums to 1 at the floored, clamped cell."""
        rng = np.random.default_rng(0)
        for _ in range(1000):
            stride = int(rng.choice([4, 8, 16, 32]))
            grid = (int(rng.integers(1, 20)), int(rng.integers(1, 20)))
            x = float(rng.uniform(0, grid[1] * stride * 1.2))
            y = float(rng.uniform(0, grid[0] * stride * 1.2))
            mask = build_mask(ClickPoint(x, y), grid, stride)
            expected = (min(int(y // stride), grid[0] - 1), min(int(x // stride), grid[1] - 1))
            assert int(mask.values.sum()) == 1
            assert mask.hot_cell == expected
            assert mask.values[expected] == 1

    def test_last_pixel_clamps(self):
        """A click on the far border clamps to the last cell."""
        assert hot_cell(64.0, 32.0, (2, 4), 16) == (1, 3)

    def test_not_one_hot_rejected(self):
        """A mask with two ones is invalid."""
        values = np.zeros((2, 2), dtype=np.int64)
        values[0, 0] = values[1, 1] = 1
        with pytest.raises(ValueError):
            ImpulseMask(values=values, hot_cell=(0, 0))

    def test_batched_masks_agree(self):
        """impulse_masks agrees cell-for-cell with build_mask."""
        rng = np.random.default_rng(1)
        points = rng.uniform(0, 128, size=(50, 2))
        batched = impulse_masks(torch.from_numpy(points), (8, 8), 16)
        for k, (x, y) in enumerate(points):
            single = build_mask(ClickPoint(float(x), float(y)), (8, 8), 16)
            assert np.array_equal(batched[k, 0].numpy().astype(np.int64), single.values)


class TestEncoder:
    """Tests for fusion, sharpening and pooling."""

    def _encoder(self, channels=6, dim=5, **kwargs):
        torch.manual_seed(0)
        return MultiObjectPositionEncoder(channels, dim, **kwargs).double()

    def test_sifting_property(self):
        """The pooled vector equals the projected fused feature at the hot cell."""
        rng = np.random.default_rng(2)
        encoder = self._encoder()
        weight = encoder.projection.weight[:, :, 0, 0]
        for _ in range(200):
            grid = (int(rng.integers(1, 6)), int(rng.integers(1, 6)))
            fused = torch.from_numpy(rng.normal(size=(1, 6, *grid)))
            cell = (int(rng.integers(grid[0])), int(rng.integers(grid[1])))
            values = np.zeros(grid, dtype=np.int64)
            values[cell] = 1
            mask = ImpulseMask(values=values, hot_cell=cell).to_tensor(torch.float64).unsqueeze(0)
            pooled = encoder.pool_to_vector(sharpen(fused, mask))
            expected = weight @ fused[0, :, cell[0], cell[1]]
            assert torch.allclose(pooled[0], expected, atol=1e-12, rtol=0)

    def test_vector_ignores_features_outside_hot_cell(self):
        """Rewriting every other cell of the query features leaves the vector unchanged."""
        gen = torch.Generator().manual_seed(6)
        encoder = self._encoder()
        for _ in range(20):
            values = torch.randn(1, 6, 3, 5, generator=gen, dtype=torch.float64)
            x, y = torch.rand(2, generator=gen).tolist()
            click = ClickPoint(x * 80, y * 48)
            row, col = hot_cell(click.x, click.y, (3, 5), 16)
            other = torch.randn(1, 6, 3, 5, generator=gen, dtype=torch.float64)
            other[:, :, row, col] = values[:, :, row, col]

            a = encode_objects(FeatureMap(values=values, stride=16, frame="query"), [click], encoder)
            b = encode_objects(FeatureMap(values=other, stride=16, frame="query"), [click], encoder)
            assert torch.allclose(a, b, atol=1e-12, rtol=0)

    def test_two_click_gradient_is_sum_of_single_clicks(self):
        """Gradients of a two-click batch equal the sum over one-click batches."""
        encoder = self._encoder()
        gen = torch.Generator().manual_seed(7)
        values = torch.randn(1, 6, 2, 4, generator=gen, dtype=torch.float64)
        readout = torch.randn(5, generator=gen, dtype=torch.float64)
        clicks = [ClickPoint(5, 5), ClickPoint(50, 20)]

        def gradients(points):
            features = values.clone().requires_grad_(True)
            encoder.zero_grad()
            fmap = FeatureMap(values=features, stride=16, frame="query")
            vectors = encode_objects(fmap, points, encoder)
            (vectors @ readout).sum().backward()
            return [features.grad.clone()] + [p.grad.clone() for p in encoder.parameters()]

        both = gradients(clicks)
        separate = [a + b for a, b in zip(gradients(clicks[:1]), gradients(clicks[1:]))]
        for joint, summed in zip(both, separate):
            assert torch.allclose(joint, summed, atol=1e-12, rtol=0)

    def test_sharpen_zeros_other_cells(self):
        """Only the hot cell survives sharpening."""
        fused = torch.ones(1, 3, 2, 2)
        mask = torch.zeros(1, 1, 2, 2)
        mask[0, 0, 1, 0] = 1
        out = sharpen(fused, mask)
        assert float(out.sum()) == 3.0
        assert torch.equal(out[0, :, 1, 0], torch.ones(3))

    def test_same_cell_same_vector(self):
        """Two clicks in the same cell give identical vectors."""
        encoder = self._encoder()
        fmap = FeatureMap(values=torch.rand(1, 6, 2, 4, dtype=torch.float64), stride=16, frame="query")
        vectors = encode_objects(fmap, [ClickPoint(17, 3), ClickPoint(30, 14)], encoder)
        assert torch.allclose(vectors[0], vectors[1], atol=1e-12, rtol=0)

    def test_different_cells_differ(self):
        """Clicks in different cells generally give different vectors."""
        encoder = self._encoder()
        fmap = FeatureMap(values=torch.rand(1, 6, 2, 4, dtype=torch.float64), stride=16, frame="query")
        vectors = encode_objects(fmap, [ClickPoint(1, 1), ClickPoint(60, 20)], encoder)
        assert not torch.allclose(vectors[0], vectors[1])

    def test_single_object_path_matches_batched(self):
        """fuse_position + pool_to_vector equals encode_objects for one click."""
        encoder = self._encoder()
        fmap = FeatureMap(values=torch.rand(1, 6, 2, 4, dtype=torch.float64), stride=16, frame="query")
        click = ClickPoint(40, 20)
        mask = build_mask(click, fmap.grid, 16)
        fused = fuse_position(fmap, mask, encoder)
        sharpened = FeatureMap(
            values=sharpen(fused.values, mask.to_tensor(torch.float64).unsqueeze(0)),
            stride=16,
            frame="query",
        )
        single = pool_to_vector(sharpened, encoder)
        batched = encode_objects(fmap, [click], encoder)
        assert torch.allclose(single, batched, atol=1e-12, rtol=0)

    def test_mask_grid_mismatch_rejected(self):
        """A mask on another grid should raise."""
        encoder = self._encoder()
        fmap = FeatureMap(values=torch.rand(1, 6, 2, 4, dtype=torch.float64), stride=16, frame="query")
        with pytest.raises(ValueError):
            fuse_position(fmap, build_mask(ClickPoint(1, 1), (3, 3), 16), encoder)

    def test_pooled_ablation_ignores_clicks(self):
        """Without position encoding every click gives the same vector."""
        encoder = self._encoder(use_position=False)
        assert not hasattr(encoder, "fuse")
        fmap = FeatureMap(values=torch.rand(1, 6, 2, 4, dtype=torch.float64), stride=16, frame="query")
        vectors = encode_objects(fmap, [ClickPoint(1, 1), ClickPoint(60, 20)], encoder)
        assert torch.allclose(vectors[0], vectors[1], atol=1e-12, rtol=0)

    def test_empty_clicks_rejected(self):
        """encode_objects needs at least one click."""
        encoder = self._encoder()
        fmap = FeatureMap(values=torch.rand(1, 6, 2, 4, dtype=torch.float64), stride=16, frame="query")
        with pytest.raises(ValueError):
            encode_objects(fmap, [], encoder)
