"""
Pixel-space geometry shared by the generator, the model and the evaluator.

Boxes are stored center-based (cx, cy, w, h) in continuous pixel coordinates,
matching the annotation format. Corner form (x1, y1, x2, y2) is derived.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BBox:
    """
    Axis-aligned box in pixels.

    Attributes:
        cx: Center x
        cy: Center y
        w: Width (> 0)
        h: Height (> 0)

    Example:
        >>> box = BBox(cx=50, cy=40, w=20, h=10)
        >>> box.xyxy
        (40.0, 35.0, 60.0, 45.0)
    """

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        """Validate box extents."""
        for name in ("cx", "cy", "w", "h"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"BBox.{name} must be finite, got {value}")
        if self.w <= 0:
            raise ValueError(f"BBox width must be positive, got {self.w}")
        if self.h <= 0:
            raise ValueError(f"BBox height must be positive, got {self.h}")

    @classmethod
    def from_xyxy(cls, x1: float, y1: float, x2: float, y2: float) -> "BBox":
        """Build a box from corner coordinates."""
        return cls(cx=(x1 + x2) / 2.0, cy=(y1 + y2) / 2.0, w=x2 - x1, h=y2 - y1)

    @property
    def xyxy(self) -> tuple[float, float, float, float]:
        """Corner form (x1, y1, x2, y2)."""
        half_w = self.w / 2.0
        half_h = self.h / 2.0
        return (
            float(self.cx - half_w),
            float(self.cy - half_h),
            float(self.cx + half_w),
            float(self.cy + half_h),
        )

    @property
    def area(self) -> float:
        """Box area in px²."""
        return float(self.w * self.h)

    def contains_point(self, x: float, y: float) -> bool:
        """True if (x, y) lies strictly inside the box."""
        x1, y1, x2, y2 = self.xyxy
        return x1 < x < x2 and y1 < y < y2

    def within(self, width: float, height: float, tol: float = 1e-9) -> bool:
        """True if the box lies inside [0, width] x [0, height]."""
        x1, y1, x2, y2 = self.xyxy
        return x1 >= -tol and y1 >= -tol and x2 <= width + tol and y2 <= height + tol

    def clip(self, width: float, height: float) -> "BBox":
        """
        Clip the box to image bounds.

        A box already inside the image is returned unchanged.

        Raises:
            ValueError: If nothing of the box remains inside the image
        """
        if self.within(width, height, tol=0.0):
            return self
        x1, y1, x2, y2 = self.xyxy
        x1, x2 = max(0.0, x1), min(float(width), x2)
        y1, y2 = max(0.0, y1), min(float(height), y2)
        return BBox.from_xyxy(x1, y1, x2, y2)

    def as_tuple(self) -> tuple[float, float, float, float]:
        """Plain (cx, cy, w, h) tuple."""
        return (float(self.cx), float(self.cy), float(self.w), float(self.h))


@dataclass(frozen=True)
class ClickPoint:
    """
    Click on a query-side object, in query-image pixels.

    Attributes:
        x: Column coordinate
        y: Row coordinate
    """

    x: float
    y: float

    def __post_init__(self):
        """Validate coordinates."""
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"ClickPoint must be finite, got ({self.x}, {self.y})")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"ClickPoint must be non-negative, got ({self.x}, {self.y})")

    def within(self, width: int, height: int) -> bool:
        """True if 0 <= x < width and 0 <= y < height."""
        return 0 <= self.x < width and 0 <= self.y < height


def sample_click_point(query_box: BBox, rng: np.random.Generator, margin: float = 1.0) -> ClickPoint:
    """
    Sample a click uniformly inside a query-side box.

    The point keeps `margin` pixels from every edge, so it always falls
    strictly inside the box.

    Args:
        query_box: Box of the object in the query image
        rng: Random state (consumed: two uniform draws)
        margin: Distance from the edges in pixels

    Returns:
        ClickPoint inside the box

    Raises:
        ValueError: If the box is narrower or lower than 2 * margin

    Example:
        >>> rng = np.random.default_rng(0)
        >>> sample_click_point(BBox(10, 10, 2, 2), rng)
        ClickPoint(x=10.0, y=10.0)
    """
    if query_box.w < 2 * margin or query_box.h < 2 * margin:
        raise ValueError(
            f"Box too small for a click with margin {margin}: "
            f"w={query_box.w}, h={query_box.h}"
        )

    x1, y1, x2, y2 = query_box.xyxy
    x = float(rng.uniform(x1 + margin, x2 - margin))
    y = float(rng.uniform(y1 + margin, y2 - margin))
    return ClickPoint(x=x, y=y)


def box_iou(a: BBox, b: BBox) -> float:
    """
    Intersection over union of two boxes in continuous coordinates.

    Returns 0.0 for disjoint boxes.
    """
    ax1, ay1, ax2, ay2 = a.xyxy
    bx1, by1, bx2, by2 = b.xyxy

    inter_w = min(ax2, bx2) - max(ax1, bx1)
    inter_h = min(ay2, by2) - max(ay1, by1)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0

    inter = inter_w * inter_h
    union = a.area + b.area - inter
    return float(min(1.0, max(0.0, inter / union)))
