"""Tests for boxes, clicks and IoU."""

import numpy as np
import pytest

from data.geometry import BBox, ClickPoint, box_iou, sample_click_point


class TestBBox:
    """Tests for BBox validation and conversions."""

    def test_xyxy_from_center_form(self):
        """Corner form should be derived from center and extent."""
        assert BBox(50, 40, 20, 10).xyxy == (40.0, 35.0, 60.0, 45.0)

    def test_from_xyxy_inverts_xyxy(self):
        """from_xyxy should rebuild the same box."""
        box = BBox.from_xyxy(3, 4, 11, 20)
        assert box.as_tuple() == (7.0, 12.0, 8.0, 16.0)

    @pytest.mark.parametrize("w, h", [(0, 5), (5, 0), (-1, 5)])
    def test_non_positive_extent_rejected(self, w, h):
        """Zero or negative width/height should raise."""
        with pytest.raises(ValueError):
            BBox(10, 10, w, h)

    def test_non_finite_rejected(self):
        """NaN coordinates should raise."""
        with pytest.raises(ValueError, match="finite"):
            BBox(float("nan"), 0, 1, 1)

    def test_clip_to_bounds(self):
        """A box crossing the border should be clipped to it."""
        clipped = BBox.from_xyxy(-10, 5, 10, 15).clip(100, 100)
        assert clipped.xyxy == (0.0, 5.0, 10.0, 15.0)

    def test_clip_keeps_inside_box(self):
        """A box inside the image should come back unchanged."""
        box = BBox(20, 20, 10, 10)
        assert box.clip(64, 64) is box

    def test_contains_point_is_strict(self):
        """Points on the border are not inside."""
        box = BBox.from_xyxy(0, 0, 10, 10)
        assert box.contains_point(5, 5)
        assert not box.contains_point(0, 5)
        assert not box.contains_point(10, 5)


class TestClickPoint:
    """Tests for ClickPoint."""

    def test_negative_rejected(self):
        """Negative coordinates should raise."""
        with pytest.raises(ValueError):
            ClickPoint(-1.0, 2.0)

    def test_within_half_open(self):
        """The right/bottom border lies outside the image."""
        assert ClickPoint(63.9, 0.0).within(64, 32)
        assert not ClickPoint(64.0, 0.0).within(64, 32)


class TestSampleClickPoint:
    """Tests for click sampling."""

    def test_clicks_fall_strictly_inside(self):
        """Every sampled click should lie strictly inside its box."""
        rng = np.random.default_rng(0)
        for _ in range(500):
            w, h = rng.integers(2, 40, size=2)
            box = BBox.from_xyxy(10, 10, 10 + int(w), 10 + int(h))
            click = sample_click_point(box, rng)
            assert box.contains_point(click.x, click.y)

    def test_same_seed_same_click(self):
        """Sampling is a pure function of the random state."""
        box = BBox(30, 30, 20, 12)
        a = sample_click_point(box, np.random.default_rng(5))
        b = sample_click_point(box, np.random.default_rng(5))
        assert a == b

    def test_too_small_box_rejected(self):
        """A box narrower than twice the margin should raise."""
        with pytest.raises(ValueError, match="too small"):
            sample_click_point(BBox(5, 5, 1.5, 4), np.random.default_rng(0))


class TestBoxIoU:
    """Tests for continuous IoU."""

    def test_unit_offset_boxes(self):
        """Two 2x2 boxes offset by one pixel overlap 1/7."""
        assert box_iou(BBox(1, 1, 2, 2), BBox(2, 2, 2, 2)) == pytest.approx(1 / 7, abs=1e-12)

    def test_identical_boxes(self):
        """IoU of a box with itself is 1."""
        box = BBox(10, 10, 6, 4)
        assert box_iou(box, box) == 1.0

    def test_disjoint_and_touching_boxes(self):
        """Disjoint or edge-touching boxes have IoU 0."""
        a = BBox.from_xyxy(0, 0, 10, 10)
        assert box_iou(a, BBox.from_xyxy(20, 20, 30, 30)) == 0.0
        assert box_iou(a, BBox.from_xyxy(10, 0, 20, 10)) == 0.0

    def test_symmetric(self):
        """IoU does not depend on argument order."""
        a, b = BBox(10, 12, 8, 6), BBox(13, 10, 10, 10)
        assert box_iou(a, b) == box_iou(b, a)
