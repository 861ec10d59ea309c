"""Synthetic cross-view data.

Scene generation (V1), the crop/flip/scale transform (V2) and the on-disk
dataset format. Every pair is a pure function of its seed and config.
"""

from .dataset import (
    AnnotationInvariantError,
    DatasetFormatError,
    DatasetSplit,
    Manifest,
    SizeHistogram,
    read_dataset,
    size_distribution,
    split_pairs,
    to_single_object,
    write_dataset,
)
from .geometry import BBox, ClickPoint, box_iou, sample_click_point
from .pairs import AnnotatedPair, ObjectAnnotation, TransformRecord
from .synthetic import PlacementError, SceneConfig, generate_dataset, generate_pair
from .transforms import TransformConfig, TransformError, transform_to_v2

__all__ = [
    "AnnotatedPair",
    "AnnotationInvariantError",
    "BBox",
    "ClickPoint",
    "DatasetFormatError",
    "DatasetSplit",
    "Manifest",
    "ObjectAnnotation",
    "PlacementError",
    "SceneConfig",
    "SizeHistogram",
    "TransformConfig",
    "TransformError",
    "TransformRecord",
    "box_iou",
    "generate_dataset",
    "generate_pair",
    "read_dataset",
    "sample_click_point",
    "size_distribution",
    "split_pairs",
    "to_single_object",
    "transform_to_v2",
    "write_dataset",
]
