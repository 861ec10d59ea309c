"""Localization network: encoders, position encoding, fusion and head."""

from .encoders import (
    EncoderConfig,
    FeatureMap,
    NonFiniteFeatureError,
    StrideError,
    encode_query,
    encode_reference,
    flatten_reference,
    unflatten_reference,
)
from .fusion import AttentionMap, attention, fuse_and_concat, modulate
from .head import Detection, DetectionHead, GridPrediction, decode_box, select
from .model import MOGeoModel, ModelConfig, ModelOutput, build_model, count_parameters
from .mope import ImpulseMask, MultiObjectPositionEncoder, build_mask, encode_objects, impulse_masks

__all__ = [
    "AttentionMap",
    "Detection",
    "DetectionHead",
    "EncoderConfig",
    "FeatureMap",
    "GridPrediction",
    "ImpulseMask",
    "MOGeoModel",
    "ModelConfig",
    "ModelOutput",
    "MultiObjectPositionEncoder",
    "NonFiniteFeatureError",
    "StrideError",
    "attention",
    "build_mask",
    "build_model",
    "count_parameters",
    "decode_box",
    "encode_objects",
    "encode_query",
    "encode_reference",
    "flatten_reference",
    "fuse_and_concat",
    "impulse_masks",
    "modulate",
    "select",
    "unflatten_reference",
]
