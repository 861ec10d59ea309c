"""Localization metrics and dataset evaluation."""

from .metrics import (
    acc_at,
    accI_at,
    iou,
    patch_grid,
    random_cell_baseline,
    rank_patches,
    retrieval_protocol,
)
from .runner import (
    DetectionRecord,
    EvalReport,
    LocalizationRunner,
    MissingDetectionsError,
    count_category,
    evaluate,
    read_detections,
    write_detections,
)

__all__ = [
    "DetectionRecord",
    "EvalReport",
    "LocalizationRunner",
    "MissingDetectionsError",
    "acc_at",
    "accI_at",
    "count_category",
    "evaluate",
    "iou",
    "patch_grid",
    "random_cell_baseline",
    "rank_patches",
    "read_detections",
    "retrieval_protocol",
    "write_detections",
]
