"""Tests for cosine attention and cross-view fusion."""

import math

import numpy as np
import pytest
import torch

from core.fusion import AttentionMap, attention, fuse_and_concat, modulate


def _cosine_loop(v_q: np.ndarray, v_r: np.ndarray) -> np.ndarray:
    out = np.zeros(len(v_r))
    for k, row in enumerate(v_r):
        denom = math.sqrt(float(v_q @ v_q)) * math.sqrt(float(row @ row))
        out[k] = float(v_q @ row) / denom
    return out


class TestAttention:
    """Tests for the attention operator."""

    def test_matches_cosine_loop(self):
        """Module output equals an independent per-location cosine loop."""
        rng = np.random.default_rng(0)
        for _ in range(100):
            d = int(rng.integers(2, 16))
            grid = (int(rng.integers(1, 6)), int(rng.integers(1, 6)))
            v_q = rng.normal(size=d)
            v_r = rng.normal(size=(grid[0] * grid[1], d))
            maps = attention(torch.from_numpy(v_q), torch.from_numpy(v_r), grid)
            assert maps.shape == grid
            expected = _cosine_loop(v_q, v_r).reshape(grid)
            assert np.allclose(maps.numpy(), expected, atol=1e-12, rtol=0)
            assert float(maps.abs().max()) <= 1.0

    def test_batched_per_object_locations(self):
        """(M, d) objects against (M, L, d) locations score row by row."""
        rng = np.random.default_rng(1)
        v_q = torch.from_numpy(rng.normal(size=(3, 4)))
        v_r = torch.from_numpy(rng.normal(size=(3, 6, 4)))
        maps = attention(v_q, v_r, (2, 3))
        for m in range(3):
            assert torch.allclose(maps[m], attention(v_q[m], v_r[m], (2, 3)), atol=1e-12, rtol=0)

    def test_parallel_vectors_give_one(self):
        """A location parallel to the object scores exactly 1 after clamping."""
        v_q = torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64)
        maps = attention(v_q, torch.stack([3 * v_q, -v_q]), (1, 2))
        assert float(maps[0, 0]) == pytest.approx(1.0, abs=1e-12)
        assert float(maps[0, 1]) == pytest.approx(-1.0, abs=1e-12)

    def test_zero_vector_gives_zero(self):
        """A zero object vector attends nowhere."""
        maps = attention(torch.zeros(4), torch.rand(6, 4), (2, 3))
        assert torch.equal(maps, torch.zeros(2, 3))

    def test_dimension_mismatch_rejected(self):
        """Object and location dimensions must agree."""
        with pytest.raises(ValueError):
            attention(torch.rand(4), torch.rand(6, 5), (2, 3))


class TestModulateAndConcat:
    """Tests for modulation and the attention channel."""

    def test_modulate_broadcasts_over_channels(self):
        """Each channel is scaled by the attention map."""
        maps = torch.rand(2, 3, 3)
        features = torch.rand(2, 5, 3, 3)
        out = modulate(maps, features)
        assert torch.equal(out[1, 4], maps[1] * features[1, 4])

    def test_concat_appends_map_last(self):
        """The attention map becomes channel d."""
        maps = torch.rand(2, 3, 3)
        out = fuse_and_concat(modulate(maps, torch.rand(2, 5, 3, 3)), maps)
        assert out.shape == (2, 6, 3, 3)
        assert torch.equal(out[:, -1], maps)

    def test_grid_mismatch_rejected(self):
        """Maps and features must share a grid."""
        with pytest.raises(ValueError):
            modulate(torch.rand(1, 3, 3), torch.rand(1, 5, 4, 4))


class TestAttentionMap:
    """Tests for the AttentionMap type."""

    def test_out_of_range_rejected(self):
        """Values outside [-1, 1] are invalid."""
        with pytest.raises(ValueError):
            AttentionMap(values=torch.tensor([[1.5]]), object_index=0)

    def test_argmax_cell_row_major(self):
        """argmax_cell returns (h, w)."""
        values = torch.zeros(3, 4)
        values[2, 1] = 0.9
        assert AttentionMap(values=values, object_index=0).argmax_cell == (2, 1)
