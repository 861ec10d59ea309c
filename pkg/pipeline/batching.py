"""Collate annotated pairs into model-ready tensors."""

from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np
import torch

from core.encoders import image_to_tensor
from data.geometry import BBox
from data.pairs import AnnotatedPair


@dataclass
class Batch:
    """
    B pairs holding M objects in total.

    Attributes:
        query: (B, 3, H_q, W_q)
        reference: (B, 3, H_r, W_r)
        points: (M, 2) click (x, y)
        image_index: (M,) pair of each object
        boxes: M ground-truth boxes
        pair_ids: B pair ids
    """

    query: torch.Tensor
    reference: torch.Tensor
    points: torch.Tensor
    image_index: torch.Tensor
    boxes: list[BBox]
    pair_ids: list[str]

    @property
    def num_objects(self) -> int:
        return len(self.boxes)


def collate(pairs: Sequence[AnnotatedPair], dtype: torch.dtype = torch.float32) -> Batch:
    """
    Stack pairs into one batch; every pair must share image sizes.

    Example:
        >>> batch = collate(pairs[:8])
        >>> output = model(batch.query, batch.reference, batch.points, batch.image_index)
    """
    if not pairs:
        raise ValueError("Cannot collate an empty batch")
    sizes = {(p.query_size, p.reference_size) for p in pairs}
    if len(sizes) != 1:
        raise ValueError(f"Pairs in a batch must share image sizes, got {sorted(sizes)}")

    points, image_index, boxes = [], [], []
    for i, pair in enumerate(pairs):
        for obj in pair.objects:
            points.append((obj.click.x, obj.click.y))
            image_index.append(i)
            boxes.append(obj.box)

    return Batch(
        query=torch.stack([image_to_tensor(p.query_image, dtype) for p in pairs]),
        reference=torch.stack([image_to_tensor(p.reference_image, dtype) for p in pairs]),
        points=torch.tensor(points, dtype=dtype),
        image_index=torch.tensor(image_index, dtype=torch.long),
        boxes=boxes,
        pair_ids=[p.pair_id for p in pairs],
    )


def epoch_order(n_pairs: int, seed: int, epoch: int) -> list[int]:
    """Data order of one epoch, fixed by (seed, epoch)."""
    generator = torch.Generator().manual_seed(seed * 1000 + epoch)
    return torch.randperm(n_pairs, generator=generator).tolist()


def iterate_batches(
    pairs: Sequence[AnnotatedPair], batch_size: int, seed: int, epoch: int
) -> Iterator[list[AnnotatedPair]]:
    """Yield the batches of one epoch (the last one may be smaller)."""
    order = epoch_order(len(pairs), seed, epoch)
    for start in range(0, len(order), batch_size):
        yield [pairs[i] for i in order[start : start + batch_size]]


def mean_box_size(pairs: Sequence[AnnotatedPair]) -> tuple[float, float]:
    """Mean (w, h) of all ground-truth boxes, the "auto" anchor."""
    boxes = [box for pair in pairs for box in pair.boxes]
    if not boxes:
        raise ValueError("No boxes to derive an anchor from")
    return float(np.mean([b.w for b in boxes])), float(np.mean([b.h for b in boxes]))
