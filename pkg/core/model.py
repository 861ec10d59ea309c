"""
End-to-end localizer: encoders -> position encoding -> cross-view fusion
-> detection head -> per-click selection.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from core.encoders import (
    EncoderConfig,
    build_query_encoder,
    build_reference_encoder,
    encode_query,
    encode_reference,
    encoder_parameter_count,
    flatten_reference,
    image_to_tensor,
)
from core.fusion import AttentionMap, attention, fuse_and_concat, modulate
from core.head import DetectionHead, Detection, GridPrediction, head_parameter_count, select
from core.mope import MultiObjectPositionEncoder
from data.geometry import ClickPoint

logger = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    """
    Architecture and ablation switches.

    Attributes:
        encoder: Shapes of both encoder branches
        head_hidden: Width of the head's 3x3 layers
        anchor: (a_w, a_h) box prior in reference pixels
        use_mope: Position-encode clicks (False: global average pooling)
        use_cvmf_concat: Append the attention map to the modulated features
        seed: Parameter initialization seed
    """

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    head_hidden: int = 64
    anchor: tuple[float, float] = (32.0, 32.0)
    use_mope: bool = True
    use_cvmf_concat: bool = True
    seed: int = 0

    def __post_init__(self):
        """Validate head width and anchor."""
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig(**self.encoder)
        self.anchor = (float(self.anchor[0]), float(self.anchor[1]))
        if self.head_hidden < 1:
            raise ValueError(f"head_hidden must be positive, got {self.head_hidden}")
        if self.anchor[0] <= 0 or self.anchor[1] <= 0:
            raise ValueError(f"anchor must be positive, got {self.anchor}")

    @property
    def head_in_channels(self) -> int:
        return self.encoder.embed_dim + (1 if self.use_cvmf_concat else 0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        data["encoder"] = EncoderConfig(**data["encoder"])
        return cls(**data)


@dataclass
class ModelOutput:
    """
    Batched forward result for M objects.

    Attributes:
        raw: (M, 5, H', W') head output
        attention: (M, H', W') cosine attention maps
        image_size: Reference (width, height)
    """

    raw: torch.Tensor
    attention: torch.Tensor
    image_size: tuple[int, int]


class MOGeoModel(nn.Module):
    """
    Multi-object cross-view localizer.

    Example:
        >>> model = build_model(ModelConfig())
        >>> detections = model.localize(pair.query_image, pair.reference_image, pair.clicks)
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        enc = config.encoder
        self.query_encoder = build_query_encoder(enc)
        self.reference_encoder = build_reference_encoder(enc)
        self.mope = MultiObjectPositionEncoder(
            enc.query_dim, enc.embed_dim, enc.activation, enc.bias, use_position=config.use_mope
        )
        self.head = DetectionHead(config.head_in_channels, config.head_hidden, enc.activation, enc.bias)

    @property
    def stride(self) -> int:
        return self.config.encoder.stride

    def forward(
        self,
        query: torch.Tensor,
        reference: torch.Tensor,
        points: torch.Tensor,
        image_index: torch.Tensor,
    ) -> ModelOutput:
        """
        Args:
            query: (B, 3, H_q, W_q) images in [0, 1]
            reference: (B, 3, H_r, W_r) images in [0, 1]
            points: (M, 2) click (x, y) in query pixels
            image_index: (M,) pair of each click

        Returns:
            ModelOutput for the M clicks in input order
        """
        debug = self.config.encoder.debug_checks
        query_map = encode_query(query, self.query_encoder, debug)
        reference_map = encode_reference(reference, self.reference_encoder, debug)

        object_vectors = self.mope(query_map.values, points, image_index, self.stride)

        locations = flatten_reference(reference_map)[image_index]
        maps = attention(object_vectors, locations, reference_map.grid)
        if debug and maps.abs().max() > 1.0:
            raise FloatingPointError("Attention left [-1, 1]")

        features = modulate(maps, reference_map.values[image_index])
        if self.config.use_cvmf_concat:
            features = fuse_and_concat(features, maps)

        raw = self.head(features)
        image_size = (int(reference.shape[-1]), int(reference.shape[-2]))
        return ModelOutput(raw=raw, attention=maps, image_size=image_size)

    def predictions(self, output: ModelOutput) -> list[GridPrediction]:
        """Split a batched output into per-object GridPredictions."""
        return [
            GridPrediction.from_raw(raw, self.config.anchor, self.stride, output.image_size)
            for raw in output.raw
        ]

    @torch.no_grad()
    def infer(
        self, query_image: np.ndarray, reference_image: np.ndarray, clicks: list[ClickPoint]
    ) -> tuple[list[Detection], list[AttentionMap]]:
        """Detections and attention maps for every click of one pair."""
        if not clicks:
            raise ValueError("localize needs at least one click")
        was_training = self.training
        self.eval()
        try:
            dtype = next(self.parameters()).dtype
            query = image_to_tensor(query_image, dtype).unsqueeze(0)
            reference = image_to_tensor(reference_image, dtype).unsqueeze(0)
            points = torch.tensor([[c.x, c.y] for c in clicks], dtype=dtype)
            image_index = torch.zeros(len(clicks), dtype=torch.long)
            output = self(query, reference, points, image_index)
        finally:
            self.train(was_training)

        detections = [select(pred, j) for j, pred in enumerate(self.predictions(output))]
        maps = [AttentionMap(values=m, object_index=j) for j, m in enumerate(output.attention)]
        return detections, maps

    def localize(
        self, query_image: np.ndarray, reference_image: np.ndarray, clicks: list[ClickPoint]
    ) -> list[Detection]:
        """One Detection per click, in click order."""
        detections, _ = self.infer(query_image, reference_image, clicks)
        return detections


def build_model(config: ModelConfig, dtype: torch.dtype = torch.float32) -> MOGeoModel:
    """
    Construct a model with fan-in scaled uniform initialization seeded by
    config.seed. The global torch RNG is left untouched.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        model = MOGeoModel(config)
    return model.to(dtype)


def count_parameters(config: ModelConfig) -> int:
    """
    Closed-form parameter count from the configured layer shapes.

    Example:
        >>> count_parameters(cfg) == sum(p.numel() for p in build_model(cfg).parameters())
        True
    """
    enc = config.encoder
    total = encoder_parameter_count(enc.query_channels, enc.bias)
    total += encoder_parameter_count(enc.reference_channels, enc.bias, out_dim=enc.embed_dim)
    if config.use_mope:
        c = enc.query_dim
        total += (c + 1) * c + (c if enc.bias else 0)
    total += enc.query_dim * enc.embed_dim
    total += head_parameter_count(config.head_in_channels, config.head_hidden, enc.bias)
    return total
