"""Tests for the geometric metrics."""

import numpy as np
import pytest

from core.head import Detection
from data.geometry import BBox
from evaluation.metrics import (
    accI_at,
    acc_at,
    iou,
    patch_grid,
    random_cell_baseline,
    rank_patches,
    retrieval_protocol,
)
from tests.fixtures.scenes import make_pair


def _raster_iou(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    grid_a = np.zeros((100, 100), dtype=bool)
    grid_b = np.zeros((100, 100), dtype=bool)
    grid_a[a[1] : a[3], a[0] : a[2]] = True
    grid_b[b[1] : b[3], b[0] : b[2]] = True
    union = int((grid_a | grid_b).sum())
    return int((grid_a & grid_b).sum()) / union


class TestIoU:
    """Tests for IoU."""

    def test_one_seventh(self):
        """Unit-offset 2x2 boxes overlap 1/7."""
        assert iou(BBox(1, 1, 2, 2), BBox(2, 2, 2, 2)) == pytest.approx(1 / 7, abs=1e-12)

    def test_raster_oracle(self):
        """Analytic IoU equals pixel-count IoU on integer boxes."""
        rng = np.random.default_rng(0)
        for _ in range(500):
            corners = []
            for _ in range(2):
                x1, x2 = sorted(rng.choice(101, size=2, replace=False))
                y1, y2 = sorted(rng.choice(101, size=2, replace=False))
                corners.append((int(x1), int(y1), int(x2), int(y2)))
            a, b = corners
            assert iou(BBox.from_xyxy(*a), BBox.from_xyxy(*b)) == _raster_iou(a, b)


class TestAccuracy:
    """Tests for acc@t and accI@t."""

    def test_strict_threshold(self):
        """IoU equal to t does not count."""
        gt = BBox.from_xyxy(0, 0, 10, 10)
        half = BBox.from_xyxy(0, 0, 10, 5)
        assert acc_at([half], [gt], 0.5) == 0.0
        assert acc_at([half], [gt], 0.25) == 1.0

    def test_accepts_detections(self):
        """Detections are scored by their box."""
        gt = BBox(10, 10, 8, 8)
        assert acc_at([Detection(box=gt, confidence=0.9, object_index=0)], [gt], 0.5) == 1.0

    def test_image_level_example(self):
        """One of two images has every object above t."""
        assert accI_at([[0.9, 0.9], [0.9, 0.1]], 0.25) == 0.5

    def test_literal_variant(self):
        """The literal case split scores images with no object above t."""
        assert accI_at([[0.1, 0.1], [0.9, 0.1]], 0.25, literal=True) == 0.5

    def test_single_object_identity(self):
        """With one object per image acc@t equals accI@t."""
        rng = np.random.default_rng(1)
        ious = rng.uniform(0, 1, size=40)
        gts = [BBox.from_xyxy(0, 0, 10, 10)] * 40
        preds = [BBox.from_xyxy(0, 0, 10, 10 * max(v, 0.01)) for v in ious]
        for t in (0.25, 0.5):
            per_image = [[iou(p, g)] for p, g in zip(preds, gts)]
            assert acc_at(preds, gts, t) == accI_at(per_image, t)

    def test_monotone_in_threshold(self):
        """Both rates are non-increasing in t."""
        rng = np.random.default_rng(2)
        per_image = [list(rng.uniform(0, 1, size=int(rng.integers(1, 5)))) for _ in range(30)]
        thresholds = [round(0.1 * k, 1) for k in range(1, 10)]
        rates = [accI_at(per_image, t) for t in thresholds]
        assert all(a >= b for a, b in zip(rates, rates[1:]))
        gts = [BBox.from_xyxy(0, 0, 10, 10)] * 30
        preds = [BBox.from_xyxy(0, 0, 10, float(rng.uniform(0.5, 10))) for _ in range(30)]
        acc = [acc_at(preds, gts, t) for t in thresholds]
        assert all(a >= b for a, b in zip(acc, acc[1:]))

    @pytest.mark.parametrize("t", [0.0, 1.0, 1.5])
    def test_threshold_range(self, t):
        """Thresholds outside (0, 1) are rejected."""
        with pytest.raises(ValueError):
            accI_at([[0.5]], t)

    def test_misaligned_rejected(self):
        """Predictions and GTs must align."""
        with pytest.raises(ValueError):
            acc_at([BBox(1, 1, 1, 1)], [], 0.5)


class TestRetrieval:
    """Tests for the patch-retrieval protocol."""

    def test_patch_grid_row_major(self):
        """Patches tile the image row by row."""
        patches = patch_grid((256, 256), 128)
        assert [p.xyxy[:2] for p in patches] == [(0, 0), (128, 0), (0, 128), (128, 128)]

    def test_rank_by_attention_mass(self):
        """The patch holding the attention ranks first; ties keep index order."""
        attention = np.zeros((16, 16))
        attention[12, 13] = 1.0
        assert rank_patches(attention, 16, (256, 256)) == [3, 0, 1, 2]

    def test_top_k(self):
        """An object counts when any of its top-k patches overlaps above t."""
        gt = BBox.from_xyxy(128, 128, 256, 256)
        assert retrieval_protocol([[3, 0, 1, 2]], [gt], (256, 256), k=1) == 1.0
        assert retrieval_protocol([[0, 1, 2, 3]], [gt], (256, 256), k=1) == 0.0
        assert retrieval_protocol([[0, 1, 2, 3]], [gt], (256, 256), k=4) == 1.0

    def test_non_tiling_patch_rejected(self):
        """Patches must tile the image."""
        with pytest.raises(ValueError):
            patch_grid((200, 256), 128)


class TestRandomCellBaseline:
    """Tests for the random-cell baseline."""

    def test_one_matching_cell_of_four(self):
        """A GT equal to one cell's anchor box scores 1/4 on a 2x2 grid."""
        pair = make_pair([BBox(8, 8, 16, 16)], reference_size=(32, 32), query_size=(32, 32))
        assert random_cell_baseline([pair], (16.0, 16.0), 16, 0.25) == pytest.approx(0.25)
