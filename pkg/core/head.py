"""
Grid detection head, box decoding and highest-confidence selection.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
from scipy.special import expit
from torch import nn

from core.encoders import make_activation
from data.geometry import BBox

# exp(t_w) above this is far outside any image and clipped anyway
_MAX_LOG_SCALE = 30.0


class DetectionHead(nn.Module):
    """
    Two 3x3 convs with a nonlinearity, then a 1x1 conv to five channels
    (confidence logit, t_x, t_y, t_w, t_h) per cell.

    Args:
        in_channels: Input channels (d + 1 with the attention channel)
        hidden: Width of the 3x3 layers
        activation: Pointwise nonlinearity
        bias: Conv biases
    """

    def __init__(self, in_channels: int, hidden: int = 64, activation: str = "relu", bias: bool = True):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Conv2d(in_channels, hidden, 3, padding=1, bias=bias),
            make_activation(activation),
            nn.Conv2d(hidden, hidden, 3, padding=1, bias=bias),
            make_activation(activation),
            nn.Conv2d(hidden, 5, 1, bias=bias),
        )

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        """(M, C_in, H', W') -> (M, 5, H', W')."""
        return self.layers(features)


def head_parameter_count(in_channels: int, hidden: int, bias: bool) -> int:
    """Closed-form parameter count of a DetectionHead."""
    total = in_channels * hidden * 9 + hidden * hidden * 9 + hidden * 5
    if bias:
        total += hidden + hidden + 5
    return total


@dataclass
class GridPrediction:
    """
    Per-cell head output for one object.

    Attributes:
        conf_logit: (H', W') confidence logits
        box_params: (4, H', W') as (t_x, t_y, t_w, t_h)
        anchor: (a_w, a_h) in pixels
        stride: Cell size S in pixels
        image_size: Reference (width, height) used for clipping
    """

    conf_logit: torch.Tensor
    box_params: torch.Tensor
    anchor: tuple[float, float]
    stride: int
    image_size: tuple[int, int]

    def __post_init__(self):
        """Validate shapes and anchor."""
        if self.anchor[0] <= 0 or self.anchor[1] <= 0:
            raise ValueError(f"Anchor must be positive, got {self.anchor}")
        if self.conf_logit.dim() != 2 or tuple(self.box_params.shape) != (4, *self.conf_logit.shape):
            raise ValueError(
                f"Shape mismatch: conf {tuple(self.conf_logit.shape)}, "
                f"box {tuple(self.box_params.shape)}"
            )

    @classmethod
    def from_raw(
        cls, raw: torch.Tensor, anchor: tuple[float, float], stride: int, image_size: tuple[int, int]
    ) -> "GridPrediction":
        """Split a (5, H', W') head output."""
        return cls(conf_logit=raw[0], box_params=raw[1:5], anchor=anchor, stride=stride, image_size=image_size)

    @property
    def grid(self) -> tuple[int, int]:
        return int(self.conf_logit.shape[0]), int(self.conf_logit.shape[1])


@dataclass(frozen=True)
class Detection:
    """
    Selected box for one click.

    Attributes:
        box: Box in reference pixels, clipped to the image
        confidence: Logistic of the selected logit, in [0, 1]
        object_index: Click index
        cell: Selected (h, w) cell
    """

    box: BBox
    confidence: float
    object_index: int
    cell: tuple[int, int] = (0, 0)

    def __post_init__(self):
        """Validate confidence."""
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


def decode_box(pred: GridPrediction, cell: tuple[int, int]) -> BBox:
    """
    Decode the box predicted at one cell.

    cx = (w + logistic(t_x)) * S, cy = (h + logistic(t_y)) * S,
    bw = a_w * exp(t_w), bh = a_h * exp(t_h), then clipped to the image.

    Example:
        >>> decode_box(zero_pred, (3, 5))   # S=16, anchor (32, 32)
        BBox(cx=88.0, cy=56.0, w=32.0, h=32.0)
    """
    h, w = cell
    rows, cols = pred.grid
    if not (0 <= h < rows and 0 <= w < cols):
        raise ValueError(f"Cell {cell} outside grid {pred.grid}")

    t_x, t_y, t_w, t_h = (float(v) for v in pred.box_params[:, h, w].detach().cpu())
    cx = (w + float(expit(t_x))) * pred.stride
    cy = (h + float(expit(t_y))) * pred.stride
    bw = pred.anchor[0] * math.exp(min(t_w, _MAX_LOG_SCALE))
    bh = pred.anchor[1] * math.exp(min(t_h, _MAX_LOG_SCALE))
    return BBox(cx=cx, cy=cy, w=bw, h=bh).clip(*pred.image_size)


def select(pred: GridPrediction, object_index: int) -> Detection:
    """
    Pick the highest-confidence cell (first in row-major order on ties).

    Example:
        >>> det = select(pred, object_index=0)
        >>> det.cell, round(det.confidence, 5)
        ((2, 3), 0.99331)
    """
    logits = pred.conf_logit.detach().cpu().numpy()
    flat = int(np.argmax(logits))
    cell = divmod(flat, logits.shape[1])
    confidence = float(expit(float(logits[cell])))
    return Detection(
        box=decode_box(pred, cell), confidence=confidence, object_index=object_index, cell=cell
    )
