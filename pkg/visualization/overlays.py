"""
Detection overlays and attention heatmaps.

Ground-truth boxes are drawn in green, predictions in blue, each labelled
with its object index. Heatmaps are min-max normalized to a colour ramp;
the normalization bounds go into the file name.
"""

import logging
from collections.abc import Sequence
from pathlib import Path

import matplotlib
import numpy as np
from PIL import Image, ImageDraw

from core.fusion import AttentionMap
from core.head import Detection
from data.dataset import read_dataset
from data.geometry import BBox
from pipeline.checkpoint import check_compatible, load_checkpoint

logger = logging.getLogger(__name__)

GT_COLOR = (0, 255, 0)
PRED_COLOR = (0, 0, 255)
COLORMAP = "viridis"


def draw_overlay(
    reference_image: np.ndarray, gt_boxes: Sequence[BBox], detections: Sequence[Detection]
) -> Image.Image:
    """
    Reference image with GT (green) and predicted (blue) boxes.

    Returns:
        RGB image of the reference image's size
    """
    image = Image.fromarray(reference_image).convert("RGB")
    draw = ImageDraw.Draw(image)
    for index, box in enumerate(gt_boxes):
        _draw_box(draw, box, GT_COLOR, str(index))
    for det in detections:
        _draw_box(draw, det.box, PRED_COLOR, str(det.object_index))
    return image


def attention_heatmap(values: np.ndarray, stride: int = 1) -> tuple[Image.Image, float, float]:
    """
    Colour-ramp rendering of an attention map.

    Each cell becomes a stride x stride block, so the heatmap aligns with
    the reference image.

    Returns:
        (image, min, max) with min/max the normalization bounds
    """
    grid = np.asarray(values, dtype=np.float64)
    lo, hi = float(grid.min()), float(grid.max())
    normalized = (grid - lo) / (hi - lo) if hi > lo else np.zeros_like(grid)
    rgba = matplotlib.colormaps[COLORMAP](normalized)
    rgb = np.rint(rgba[..., :3] * 255.0).astype(np.uint8)
    if stride > 1:
        rgb = rgb.repeat(stride, axis=0).repeat(stride, axis=1)
    return Image.fromarray(rgb), lo, hi


def heatmap_filename(object_index: int, lo: float, hi: float) -> str:
    return f"attention_obj{object_index}_min{lo:.3f}_max{hi:.3f}.png"


def save_attention_maps(maps: Sequence[AttentionMap], stride: int, out: str | Path) -> list[Path]:
    """One heatmap PNG per object."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for attention_map in maps:
        image, lo, hi = attention_heatmap(attention_map.values.detach().cpu().numpy(), stride)
        path = out / heatmap_filename(attention_map.object_index, lo, hi)
        image.save(path)
        paths.append(path)
    return paths


def visualize(
    checkpoint: str | Path, dataset_root: str | Path, pair_id: str, out: str | Path
) -> list[Path]:
    """
    Write the detection overlay and the attention heatmaps of one pair.

    Returns:
        [overlay path, heatmap paths...]

    Raises:
        KeyError: Unknown pair_id
    """
    ckpt = load_checkpoint(checkpoint)
    pairs, _ = read_dataset(dataset_root)
    matches = [p for p in pairs if p.pair_id == pair_id]
    if not matches:
        raise KeyError(f"Unknown pair_id {pair_id!r} in {dataset_root}")
    pair = matches[0]
    check_compatible(ckpt.model_config, [pair])

    model = ckpt.build()
    detections, maps = model.infer(pair.query_image, pair.reference_image, pair.clicks)

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    overlay_path = out / f"overlay_{pair_id}.png"
    draw_overlay(pair.reference_image, pair.boxes, detections).save(overlay_path)
    heatmaps = save_attention_maps(maps, ckpt.model_config.encoder.stride, out)

    logger.info(f"Wrote overlay and {len(heatmaps)} heatmaps for {pair_id} to {out}")
    return [overlay_path, *heatmaps]


def _draw_box(draw: ImageDraw.ImageDraw, box: BBox, color: tuple[int, int, int], label: str) -> None:
    x1, y1, x2, y2 = box.xyxy
    draw.rectangle([x1, y1, max(x1, x2 - 1), max(y1, y2 - 1)], outline=color, width=2)
    draw.text((x1 + 2, y1 + 1), label, fill=color)
