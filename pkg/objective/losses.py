"""
Training objective: confidence loss + regression loss + attention
similarity loss.

The confidence and regression terms follow the single-anchor grid
formulation: one positive cell per object (the cell holding the GT center),
BCE over all cells, squared error on the encoded box at the positive cell.
The similarity term pushes the attention maps of different objects apart.
"""

import math
from dataclasses import dataclass
from typing import Literal

import torch
import torch.nn.functional as F

from core.fusion import AttentionMap
from core.head import GridPrediction
from data.geometry import BBox

Aggregation = Literal["mean", "min"]
Scope = Literal["batch", "image"]
Reduction = Literal["sum", "mean"]


@dataclass
class ObjectiveConfig:
    """
    Loss options.

    Attributes:
        w_cn: Weight of the confidence loss
        w_reg: Weight of the regression loss
        w_s: Weight of the similarity loss
        use_similarity_loss: False forces l_s = 0
        negative_aggregation: "mean" distance to all negatives or "min" (hardest)
        negative_scope: "batch" (all other maps) or "image" (same image pair only)
        similarity_reduction: "sum" over maps, or "mean" to keep l_s on the scale of
            the per-object terms whatever the batch size
    """

    w_cn: float = 1.0
    w_reg: float = 1.0
    w_s: float = 1.0
    use_similarity_loss: bool = True
    negative_aggregation: Aggregation = "mean"
    negative_scope: Scope = "batch"
    similarity_reduction: Reduction = "sum"

    def __post_init__(self):
        """Validate options."""
        for name in ("w_cn", "w_reg", "w_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.negative_aggregation not in ("mean", "min"):
            raise ValueError(f"negative_aggregation must be mean or min, got {self.negative_aggregation!r}")
        if self.negative_scope not in ("batch", "image"):
            raise ValueError(f"negative_scope must be batch or image, got {self.negative_scope!r}")
        if self.similarity_reduction not in ("sum", "mean"):
            raise ValueError(
                f"similarity_reduction must be sum or mean, got {self.similarity_reduction!r}"
            )


@dataclass
class LossBreakdown:
    """
    Loss terms of one step (0-dim tensors, differentiable).

    total = w_cn * l_cn + w_reg * l_reg + w_s * l_s, summed in that order;
    with unit weights total = l_cn + l_reg + l_s.
    """

    l_cn: torch.Tensor
    l_reg: torch.Tensor
    l_s: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {name: float(getattr(self, name).detach()) for name in ("l_cn", "l_reg", "l_s", "total")}

    def nonfinite_terms(self) -> list[str]:
        """Names of the terms holding NaN or Inf."""
        return [name for name, value in self.as_floats().items() if not math.isfinite(value)]

    def log_line(self, step: int) -> str:
        """`step l_cn l_reg l_s total` training log record."""
        v = self.as_floats()
        return f"{step} {v['l_cn']:.6f} {v['l_reg']:.6f} {v['l_s']:.6f} {v['total']:.6f}"


def target_cell(gt_box: BBox, stride: int, grid: tuple[int, int]) -> tuple[int, int]:
    """Cell (h, w) containing the GT center, clamped to the grid."""
    rows, cols = grid
    h = min(max(int(math.floor(gt_box.cy / stride)), 0), rows - 1)
    w = min(max(int(math.floor(gt_box.cx / stride)), 0), cols - 1)
    return h, w


def encode_target(gt_box: BBox, anchor: tuple[float, float], stride: int, grid: tuple[int, int]):
    """
    Regression targets of a GT box.

    Returns:
        (cell, (g_x, g_y, ln(g_w / a_w), ln(g_h / a_h))) with (g_x, g_y) the
        fractional offset of the center inside its cell
    """
    if gt_box.w <= 0 or gt_box.h <= 0:
        raise ValueError(f"GT box must have positive extent, got {gt_box}")
    h, w = target_cell(gt_box, stride, grid)
    g_x = gt_box.cx / stride - w
    g_y = gt_box.cy / stride - h
    return (h, w), (g_x, g_y, math.log(gt_box.w / anchor[0]), math.log(gt_box.h / anchor[1]))


def confidence_loss(pred: GridPrediction, gt_box: BBox) -> torch.Tensor:
    """
    Mean binary cross-entropy over all cells against a one-hot target at
    the GT center cell.

    Example:
        >>> confidence_loss(all_zero_logits, gt)   # ln 2
        tensor(0.6931)
    """
    cell = target_cell(gt_box, pred.stride, pred.grid)
    target = torch.zeros_like(pred.conf_logit)
    target[cell] = 1.0
    return F.binary_cross_entropy_with_logits(pred.conf_logit, target, reduction="mean")


def regression_loss(pred: GridPrediction, gt_box: BBox) -> torch.Tensor:
    """
    Squared error of the encoded box at the positive cell (sum of 4 terms).

    Raises:
        ValueError: If the GT box has non-positive width or height
    """
    (h, w), (g_x, g_y, g_w, g_h) = encode_target(gt_box, pred.anchor, pred.stride, pred.grid)
    t_x, t_y, t_w, t_h = pred.box_params[:, h, w]
    return (
        (torch.sigmoid(t_x) - g_x) ** 2
        + (torch.sigmoid(t_y) - g_y) ** 2
        + (t_w - g_w) ** 2
        + (t_h - g_h) ** 2
    )


def similarity_loss(
    attention_maps: torch.Tensor | list[AttentionMap],
    grouping: torch.Tensor | None = None,
    aggregation: Aggregation = "mean",
    scope: Scope = "batch",
    reduction: Reduction = "sum",
) -> torch.Tensor:
    """
    Sum over maps of ln(1 + exp(-d_neg)).

    d_neg aggregates the Euclidean distances from a flattened map to its
    negatives. A map's distance to itself is 0 and is not a negative. Maps
    without negatives contribute 0.

    Args:
        attention_maps: (M, H', W') tensor or list of AttentionMap
        grouping: (M,) image-pair index of each map (needed for scope="image")
        aggregation: "mean" or "min" over negatives
        scope: "batch" or "image"
        reduction: "sum" over maps with negatives, or their "mean"

    Example:
        >>> similarity_loss(torch.zeros(2, 4, 4))   # 2 ln 2
        tensor(1.3863)
    """
    if isinstance(attention_maps, list):
        if not attention_maps:
            raise ValueError("similarity_loss needs at least one map")
        shapes = {tuple(m.values.shape) for m in attention_maps}
        if len(shapes) != 1:
            raise ValueError(f"Attention maps have different grids: {sorted(shapes)}")
        maps = torch.stack([m.values for m in attention_maps])
    else:
        maps = attention_maps
    if maps.dim() != 3 or maps.shape[0] < 1:
        raise ValueError(f"Expected (M, H', W') maps, got shape {tuple(maps.shape)}")

    count = maps.shape[0]
    flat = maps.reshape(count, -1)
    negatives = ~torch.eye(count, dtype=torch.bool, device=maps.device)
    if scope == "image":
        if grouping is None:
            raise ValueError("scope='image' needs a grouping tensor")
        negatives &= grouping.view(-1, 1) == grouping.view(1, -1)
    elif scope != "batch":
        raise ValueError(f"Unknown scope {scope!r}")

    has_negative = negatives.any(dim=1)
    if not bool(has_negative.any()):
        return flat.sum() * 0.0

    distances = torch.cdist(flat, flat, p=2.0, compute_mode="donot_use_mm_for_euclid_dist")
    if aggregation == "mean":
        d_neg = (distances * negatives).sum(dim=1) / negatives.sum(dim=1).clamp(min=1)
    elif aggregation == "min":
        d_neg = distances.masked_fill(~negatives, math.inf).min(dim=1).values
    else:
        raise ValueError(f"Unknown aggregation {aggregation!r}")

    per_map = F.softplus(-d_neg[has_negative])
    if reduction == "mean":
        return per_map.mean()
    if reduction != "sum":
        raise ValueError(f"Unknown reduction {reduction!r}")
    return per_map.sum()


def total_loss(
    preds: list[GridPrediction],
    gts: list[BBox],
    attention_maps: torch.Tensor,
    grouping: torch.Tensor | None = None,
    config: ObjectiveConfig | None = None,
) -> LossBreakdown:
    """
    Full objective over the objects of a batch.

    l_cn and l_reg are means over objects; l_s follows similarity_loss.

    Raises:
        ValueError: If predictions, boxes and maps are not aligned
    """
    config = config or ObjectiveConfig()
    if not preds or len(preds) != len(gts) or len(preds) != attention_maps.shape[0]:
        raise ValueError(
            f"Misaligned inputs: {len(preds)} predictions, {len(gts)} boxes, "
            f"{attention_maps.shape[0]} attention maps"
        )

    l_cn = torch.stack([confidence_loss(p, g) for p, g in zip(preds, gts)]).mean()
    l_reg = torch.stack([regression_loss(p, g) for p, g in zip(preds, gts)]).mean()
    if config.use_similarity_loss:
        l_s = similarity_loss(
            attention_maps,
            grouping,
            config.negative_aggregation,
            config.negative_scope,
            config.similarity_reduction,
        )
    else:
        l_s = torch.zeros((), dtype=l_cn.dtype, device=l_cn.device)

    total = config.w_cn * l_cn + config.w_reg * l_reg + config.w_s * l_s
    return LossBreakdown(l_cn=l_cn, l_reg=l_reg, l_s=l_s, total=total)
