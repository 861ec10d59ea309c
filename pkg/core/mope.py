"""
Multi-object position encoding.

Each click becomes a one-hot impulse mask on the query feature grid. The
mask is concatenated to the query features, mixed by a 1x1 conv, multiplied
back by the mask and sum-pooled, so every object vector is the projected
fused feature at its click cell.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from core.encoders import FeatureMap, make_activation
from data.geometry import ClickPoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImpulseMask:
    """
    One-hot mask over the query grid.

    Attributes:
        values: int array (H', W') with a single 1
        hot_cell: (h, w) of the 1
    """

    values: np.ndarray
    hot_cell: tuple[int, int]

    def __post_init__(self):
        """Validate the one-hot invariant."""
        if self.values.ndim != 2:
            raise ValueError(f"ImpulseMask must be 2-D, got shape {self.values.shape}")
        if int(self.values.sum()) != 1 or self.values[self.hot_cell] != 1:
            raise ValueError(f"ImpulseMask must be one-hot at {self.hot_cell}")

    @property
    def grid(self) -> tuple[int, int]:
        return int(self.values.shape[0]), int(self.values.shape[1])

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        """(1, H', W') tensor."""
        return torch.from_numpy(self.values).to(dtype).unsqueeze(0)


def hot_cell(x: float, y: float, grid: tuple[int, int], stride: int) -> tuple[int, int]:
    """(floor(y / S), floor(x / S)) clamped to the grid."""
    height, width = grid
    h = min(max(int(math.floor(y / stride)), 0), height - 1)
    w = min(max(int(math.floor(x / stride)), 0), width - 1)
    return h, w


def build_mask(point: ClickPoint, grid: tuple[int, int], stride: int) -> ImpulseMask:
    """
    One-hot mask at the feature cell containing the click.

    Example:
        >>> build_mask(ClickPoint(x=35, y=250), (16, 16), 16).hot_cell
        (15, 2)
    """
    cell = hot_cell(point.x, point.y, grid, stride)
    values = np.zeros(grid, dtype=np.int64)
    values[cell] = 1
    return ImpulseMask(values=values, hot_cell=cell)


def impulse_masks(
    points: torch.Tensor, grid: tuple[int, int], stride: int, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """
    Batched masks for (M, 2) click coordinates (x, y).

    Returns:
        (M, 1, H', W') one-hot tensor; agrees cell-for-cell with build_mask
    """
    height, width = grid
    cells = torch.floor(points.detach().to(torch.float64) / stride).long()
    w = cells[:, 0].clamp(0, width - 1)
    h = cells[:, 1].clamp(0, height - 1)
    masks = torch.zeros(points.shape[0], height * width, dtype=dtype, device=points.device)
    masks[torch.arange(points.shape[0], device=points.device), h * width + w] = 1.0
    return masks.view(points.shape[0], 1, height, width)


class MultiObjectPositionEncoder(nn.Module):
    """
    Learned part of the position encoding.

    With ``use_position=False`` the query features are global-average pooled
    and projected instead, discarding the clicks.

    Args:
        query_dim: Query channel count C
        embed_dim: Object vector length d
        activation: Nonlinearity after the fusing 1x1 conv
        bias: Bias of the fusing conv (the projection never has one)
        use_position: Encode clicks; False selects the pooled ablation
    """

    def __init__(
        self,
        query_dim: int,
        embed_dim: int,
        activation: str = "relu",
        bias: bool = True,
        use_position: bool = True,
    ):
        super().__init__()
        self.use_position = use_position
        if use_position:
            self.fuse = nn.Conv2d(query_dim + 1, query_dim, 1, bias=bias)
            self.act = make_activation(activation)
        # Bias-free so sum pooling equals the projected hot-cell column
        self.projection = nn.Conv2d(query_dim, embed_dim, 1, bias=False)

    def fuse_position(self, features: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
        """(M, C, H', W') features + (M, 1, H', W') masks -> (M, C, H', W')."""
        _check_grid(features, masks, "fuse_position")
        return self.act(self.fuse(torch.cat([features, masks], dim=1)))

    def pool_to_vector(self, sharpened: torch.Tensor) -> torch.Tensor:
        """Project each location to d channels and sum over the grid."""
        return self.projection(sharpened).sum(dim=(-2, -1))

    def forward(
        self,
        query_features: torch.Tensor,
        points: torch.Tensor,
        image_index: torch.Tensor,
        stride: int,
    ) -> torch.Tensor:
        """
        Object vectors for M clicks spread over B query images.

        Args:
            query_features: (B, C, H', W')
            points: (M, 2) click (x, y) in query pixels
            image_index: (M,) image of each click
            stride: Encoder stride S

        Returns:
            (M, d) object vectors, in click order
        """
        features = query_features[image_index]
        if not self.use_position:
            pooled = features.mean(dim=(-2, -1), keepdim=True)
            return self.projection(pooled).flatten(start_dim=1)

        masks = impulse_masks(points, features.shape[-2:], stride, dtype=features.dtype)
        fused = self.fuse_position(features, masks)
        return self.pool_to_vector(sharpen(fused, masks))


def sharpen(fused: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Zero every cell outside the hot cell; the mask broadcasts over channels."""
    _check_grid(fused, masks, "sharpen")
    return fused * masks


def fuse_position(fmap: FeatureMap, mask: ImpulseMask, encoder: MultiObjectPositionEncoder) -> FeatureMap:
    """Single-object fusion of query features with one impulse mask."""
    if fmap.grid != mask.grid:
        raise ValueError(f"Mask grid {mask.grid} does not match feature grid {fmap.grid}")
    values = fmap.values if fmap.values.dim() == 4 else fmap.values.unsqueeze(0)
    fused = encoder.fuse_position(values, mask.to_tensor(values.dtype).unsqueeze(0))
    return FeatureMap(values=fused, stride=fmap.stride, frame="query")


def pool_to_vector(fmap: FeatureMap, encoder: MultiObjectPositionEncoder) -> torch.Tensor:
    """(1, C, H', W') sharpened map -> (1, d) vector."""
    return encoder.pool_to_vector(fmap.values)


def encode_objects(
    fmap: FeatureMap, points: list[ClickPoint], encoder: MultiObjectPositionEncoder
) -> torch.Tensor:
    """
    Encode every click of one query image, sharing the learned parameters.

    Args:
        fmap: Query features of a single image, (1, C, H', W')
        points: Clicks in query pixels, non-empty
        encoder: Learned position encoder

    Returns:
        (m, d) object vectors in click order
    """
    if not points:
        raise ValueError("encode_objects needs at least one click")
    values = fmap.values if fmap.values.dim() == 4 else fmap.values.unsqueeze(0)
    if values.shape[0] != 1:
        raise ValueError(f"encode_objects expects one image, got batch {values.shape[0]}")
    coords = torch.tensor([[p.x, p.y] for p in points], dtype=values.dtype, device=values.device)
    image_index = torch.zeros(len(points), dtype=torch.long, device=values.device)
    return encoder(values, coords, image_index, fmap.stride)


def _check_grid(features: torch.Tensor, masks: torch.Tensor, op: str) -> None:
    if features.shape[-2:] != masks.shape[-2:]:
        raise ValueError(
            f"{op}: mask grid {tuple(masks.shape[-2:])} != feature grid {tuple(features.shape[-2:])}"
        )
