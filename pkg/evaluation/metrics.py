"""
Geometric localization metrics.

All comparisons use continuous coordinates and the strict "> t" threshold.
"""

import logging
from collections.abc import Sequence

import numpy as np

from core.head import Detection
from data.geometry import BBox, box_iou
from data.pairs import AnnotatedPair

logger = logging.getLogger(__name__)

THRESHOLDS = (0.25, 0.5)


def iou(a: BBox, b: BBox) -> float:
    """
    Intersection over union; 0.0 for disjoint boxes.

    Example:
        >>> iou(BBox(1, 1, 2, 2), BBox(2, 2, 2, 2))
        0.14285714285714285
    """
    return box_iou(a, b)


def acc_at(predictions: Sequence[Detection | BBox], gts: Sequence[BBox], t: float) -> float:
    """
    Fraction of objects whose predicted box has IoU > t with its GT.

    Args:
        predictions: Detections (or bare boxes), aligned with gts
        gts: Ground-truth boxes
        t: Threshold in (0, 1)

    Raises:
        ValueError: On misaligned or empty inputs, or t outside (0, 1)
    """
    _check_threshold(t)
    if not gts or len(predictions) != len(gts):
        raise ValueError(f"Misaligned inputs: {len(predictions)} predictions, {len(gts)} GT boxes")
    hits = sum(iou(_box(p), g) > t for p, g in zip(predictions, gts))
    return hits / len(gts)


def accI_at(per_image: Sequence[Sequence[float]], t: float, literal: bool = False) -> float:
    """
    Fraction of images in which every object has IoU > t.

    Args:
        per_image: Per-image lists of object IoUs
        t: Threshold in (0, 1)
        literal: Score an image 1 only when no object exceeds t, as the
            case split is sometimes printed; for comparison only

    Example:
        >>> accI_at([[0.9, 0.9], [0.9, 0.1]], 0.25)
        0.5
    """
    _check_threshold(t)
    if not per_image:
        raise ValueError("accI_at needs at least one image")
    correct = 0
    for i, ious in enumerate(per_image):
        if len(ious) == 0:
            raise ValueError(f"Image {i} has no objects")
        if literal:
            correct += not any(v > t for v in ious)
        else:
            correct += all(v > t for v in ious)
    return correct / len(per_image)


def patch_grid(image_size: tuple[int, int], patch_size: int = 128) -> list[BBox]:
    """
    Row-major tiling of the image into square patches.

    Raises:
        ValueError: If the patches do not tile the image
    """
    width, height = image_size
    if patch_size < 1 or width % patch_size or height % patch_size:
        raise ValueError(f"Patches of {patch_size} px do not tile a {width}x{height} image")
    return [
        BBox.from_xyxy(col * patch_size, row * patch_size, (col + 1) * patch_size, (row + 1) * patch_size)
        for row in range(height // patch_size)
        for col in range(width // patch_size)
    ]


def rank_patches(
    attention_map: np.ndarray, stride: int, image_size: tuple[int, int], patch_size: int = 128
) -> list[int]:
    """
    Rank patches by the attention mass they cover (highest first, ties by index).

    Args:
        attention_map: (H', W') map over the reference grid
        stride: Cells are stride x stride pixels
        image_size: Reference (width, height)
        patch_size: Patch side; must be a multiple of stride
    """
    patch_grid(image_size, patch_size)
    if patch_size % stride:
        raise ValueError(f"patch_size {patch_size} is not a multiple of stride {stride}")
    values = np.asarray(attention_map, dtype=np.float64)
    width, height = image_size
    if values.shape != (height // stride, width // stride):
        raise ValueError(f"Attention grid {values.shape} does not match image {width}x{height}")

    cells = patch_size // stride
    rows, cols = height // patch_size, width // patch_size
    scores = values.reshape(rows, cells, cols, cells).sum(axis=(1, 3)).ravel()
    return [int(i) for i in np.argsort(-scores, kind="stable")]


def retrieval_protocol(
    rankings: Sequence[Sequence[int]],
    gts: Sequence[BBox],
    image_size: tuple[int, int],
    patch_size: int = 128,
    t: float = 0.25,
    k: int = 5,
) -> float:
    """
    Success rate of a patch-retrieval localizer.

    An object counts as localized when any of its top-k patches has IoU > t
    with its GT box.

    Args:
        rankings: Per object, patch indices (row-major) in ranked order
        gts: GT boxes aligned with rankings
        image_size: Reference (width, height)
        patch_size: Patch side in pixels
        t: IoU threshold
        k: Patches considered per object
    """
    _check_threshold(t)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not gts or len(rankings) != len(gts):
        raise ValueError(f"Misaligned inputs: {len(rankings)} rankings, {len(gts)} GT boxes")
    patches = patch_grid(image_size, patch_size)

    hits = 0
    for ranked, gt in zip(rankings, gts):
        best = max((iou(patches[i], gt) for i in list(ranked)[:k]), default=0.0)
        hits += best > t
    return hits / len(gts)


def random_cell_baseline(
    pairs: Sequence[AnnotatedPair], anchor: tuple[float, float], stride: int, t: float
) -> float:
    """
    Expected acc@t of picking a uniformly random cell and decoding zero
    box parameters there (anchor-sized box centered in the cell).
    """
    _check_threshold(t)
    if not pairs:
        raise ValueError("random_cell_baseline needs at least one pair")

    rates = []
    for pair in pairs:
        width, height = pair.reference_size
        candidates = [
            BBox(cx=(w + 0.5) * stride, cy=(h + 0.5) * stride, w=anchor[0], h=anchor[1]).clip(width, height)
            for h in range(height // stride)
            for w in range(width // stride)
        ]
        for gt in pair.boxes:
            rates.append(np.mean([iou(c, gt) > t for c in candidates]))
    return float(np.mean(rates))


def _box(prediction: Detection | BBox) -> BBox:
    return prediction.box if isinstance(prediction, Detection) else prediction


def _check_threshold(t: float) -> None:
    if not 0.0 < t < 1.0:
        raise ValueError(f"Threshold must be in (0, 1), got {t}")
