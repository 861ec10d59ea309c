"""
Annotated cross-view pairs: one query image, one reference image and the
ordered list of (click point, reference box) correspondences.
"""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from data.geometry import BBox, ClickPoint

Alignment = Literal["V1", "V2"]


@dataclass(frozen=True)
class TransformRecord:
    """
    Invertible record of the crop/flip/scale applied to a reference image.

    Each axis maps as ``x' = a * x + b``; a negative ``a_x`` encodes the
    horizontal flip. ``remapped`` holds the retained boxes before clipping,
    so the inverse reproduces the source boxes exactly.

    Attributes:
        flip: Horizontal flip applied
        scale: Sampled zoom factor
        crop: Sampled crop fraction
        window: Crop window (x0, y0, width, height) in source pixels
        output_size: Output (width, height)
        a_x, b_x, a_y, b_y: Affine coefficients per axis
        retained: Source indices of the objects that survived the crop
        remapped: Unclipped remapped boxes of the retained objects
    """

    flip: bool
    scale: float
    crop: float
    window: tuple[float, float, float, float]
    output_size: tuple[int, int]
    a_x: float
    b_x: float
    a_y: float
    b_y: float
    retained: tuple[int, ...] = ()
    remapped: tuple[BBox, ...] = ()

    def apply_point(self, x: float, y: float) -> tuple[float, float]:
        """Map a source point into the output frame."""
        return self.a_x * x + self.b_x, self.a_y * y + self.b_y

    def invert_point(self, x: float, y: float) -> tuple[float, float]:
        """Map an output point back into the source frame."""
        return (x - self.b_x) / self.a_x, (y - self.b_y) / self.a_y

    def apply_box(self, box: BBox) -> BBox:
        """Map a source box into the output frame (no clipping)."""
        cx, cy = self.apply_point(box.cx, box.cy)
        return BBox(cx=cx, cy=cy, w=abs(self.a_x) * box.w, h=abs(self.a_y) * box.h)

    def invert_box(self, box: BBox) -> BBox:
        """Map an output box back into the source frame."""
        cx, cy = self.invert_point(box.cx, box.cy)
        return BBox(cx=cx, cy=cy, w=box.w / abs(self.a_x), h=box.h / abs(self.a_y))


@dataclass(frozen=True)
class ObjectAnnotation:
    """
    One matched object.

    Attributes:
        index: Position in the pair's object list
        click: Click point in the query image
        box: Ground-truth box in the reference image
        query_box: Box of the object in the query image (None if unknown)
        identity: Generator identity tag, stable across V1 -> V2
    """

    index: int
    click: ClickPoint
    box: BBox
    query_box: BBox | None = None
    identity: int = -1


@dataclass(eq=False)
class AnnotatedPair:
    """
    A query/reference image pair with its object correspondences.

    Images are uint8 arrays of shape (H, W, 3). Object order defines the
    correspondence: index i of the clicks and index i of the boxes are the
    same physical object.

    Example:
        >>> pair = generate_pair(seed=7, num_objects=3, scene=SceneConfig())
        >>> [obj.box for obj in pair.objects]
    """

    pair_id: str
    query_image: np.ndarray
    reference_image: np.ndarray
    objects: list[ObjectAnnotation]
    alignment: Alignment = "V1"
    transform: TransformRecord | None = field(default=None)

    def __post_init__(self):
        """Validate type invariants."""
        if not self.pair_id or any(ch.isspace() for ch in self.pair_id):
            raise ValueError(f"pair_id must be a non-empty token, got {self.pair_id!r}")
        if self.alignment not in ("V1", "V2"):
            raise ValueError(f"alignment must be V1 or V2, got {self.alignment!r}")
        for name in ("query_image", "reference_image"):
            image = getattr(self, name)
            if image.ndim != 3 or image.shape[2] != 3:
                raise ValueError(f"{name} must have shape (H, W, 3), got {image.shape}")
        if not self.objects:
            raise ValueError(f"Pair {self.pair_id} has no objects")

        q_w, q_h = self.query_size
        r_w, r_h = self.reference_size
        for i, obj in enumerate(self.objects):
            if obj.index != i:
                raise ValueError(f"Object {i} of {self.pair_id} carries index {obj.index}")
            if not obj.click.within(q_w, q_h):
                raise ValueError(
                    f"Click {obj.click} of object {i} outside query image {q_w}x{q_h}"
                )
            if obj.query_box is not None and not obj.query_box.contains_point(
                obj.click.x, obj.click.y
            ):
                raise ValueError(f"Click of object {i} not inside its query box")
            if not obj.box.within(r_w, r_h):
                raise ValueError(f"Box {obj.box} of object {i} outside reference {r_w}x{r_h}")

    @property
    def query_size(self) -> tuple[int, int]:
        """Query (width, height)."""
        return int(self.query_image.shape[1]), int(self.query_image.shape[0])

    @property
    def reference_size(self) -> tuple[int, int]:
        """Reference (width, height)."""
        return int(self.reference_image.shape[1]), int(self.reference_image.shape[0])

    @property
    def clicks(self) -> list[ClickPoint]:
        return [obj.click for obj in self.objects]

    @property
    def boxes(self) -> list[BBox]:
        return [obj.box for obj in self.objects]

    @property
    def num_objects(self) -> int:
        return len(self.objects)
