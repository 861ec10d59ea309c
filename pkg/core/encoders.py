"""
Dual-branch feature extraction with a fixed stride contract.

Both branches are stacks of stride-2 3x3 convolutions, so an H x W image
maps to an (H/S) x (W/S) grid exactly. The reference branch ends with a
per-location linear projection to the embedding dimension d.
"""

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
import torch
from torch import nn

logger = logging.getLogger(__name__)

Frame = Literal["query", "reference"]
ACTIVATIONS = ("relu", "silu")


class StrideError(ValueError):
    """Input dimensions are not divisible by the encoder stride."""


class NonFiniteFeatureError(FloatingPointError):
    """A feature map holds NaN or Inf."""


@dataclass
class EncoderConfig:
    """
    Shape of both encoder branches.

    Attributes:
        stride: Total downsampling S (2 ** number of stages)
        query_channels: Output channels of each query stage; the last is C
        reference_channels: Output channels of each reference stage
        embed_dim: Reference embedding dimension d
        bias: Use biases in the conv layers
        activation: Pointwise nonlinearity ("relu" or "silu")
        debug_checks: Assert finiteness of every feature map

    Example:
        >>> cfg = EncoderConfig(stride=16, query_channels=(8, 8, 8, 16))
        >>> cfg.query_dim
        16
    """

    stride: int = 16
    query_channels: tuple[int, ...] = (16, 32, 64, 256)
    reference_channels: tuple[int, ...] = (16, 32, 64, 128)
    embed_dim: int = 512
    bias: bool = True
    activation: str = "relu"
    debug_checks: bool = False

    def __post_init__(self):
        """Validate the stride contract."""
        self.query_channels = tuple(int(c) for c in self.query_channels)
        self.reference_channels = tuple(int(c) for c in self.reference_channels)
        for name in ("query_channels", "reference_channels"):
            channels = getattr(self, name)
            if not channels or any(c < 1 for c in channels):
                raise ValueError(f"{name} must be non-empty positive widths, got {channels}")
            if 2 ** len(channels) != self.stride:
                raise ValueError(
                    f"{name} has {len(channels)} stride-2 stages, "
                    f"product {2 ** len(channels)} != stride {self.stride}"
                )
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be positive, got {self.embed_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def query_dim(self) -> int:
        """Query channel count C."""
        return self.query_channels[-1]


@dataclass
class FeatureMap:
    """
    Encoder output.

    Attributes:
        values: Tensor of shape (B, C, H', W')
        stride: Downsampling factor S
        frame: "query" or "reference"
    """

    values: torch.Tensor
    stride: int
    frame: Frame

    @property
    def grid(self) -> tuple[int, int]:
        """(H', W')."""
        return int(self.values.shape[-2]), int(self.values.shape[-1])

    @property
    def channels(self) -> int:
        return int(self.values.shape[-3])


def make_activation(name: str) -> nn.Module:
    """Pointwise nonlinearity by name."""
    if name == "relu":
        return nn.ReLU()
    if name == "silu":
        return nn.SiLU()
    raise ValueError(f"Unknown activation {name!r}")


class ConvEncoder(nn.Module):
    """
    Stride-2 conv stack with an optional per-location output projection.

    Args:
        channels: Output width of each stage
        activation: Nonlinearity after each stage
        bias: Conv biases
        out_dim: If set, append a 1x1 projection to this many channels
    """

    def __init__(
        self,
        channels: tuple[int, ...],
        activation: str = "relu",
        bias: bool = True,
        out_dim: int | None = None,
    ):
        super().__init__()
        layers: list[nn.Module] = []
        in_channels = 3
        for width in channels:
            layers.append(nn.Conv2d(in_channels, width, 3, stride=2, padding=1, bias=bias))
            layers.append(make_activation(activation))
            in_channels = width
        self.stages = nn.Sequential(*layers)
        self.projection = (
            nn.Conv2d(in_channels, out_dim, 1, bias=bias) if out_dim is not None else None
        )
        self.stride = 2 ** len(channels)
        self.out_channels = out_dim if out_dim is not None else in_channels

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        features = self.stages(images)
        if self.projection is not None:
            features = self.projection(features)
        return features


def build_query_encoder(cfg: EncoderConfig) -> ConvEncoder:
    return ConvEncoder(cfg.query_channels, cfg.activation, cfg.bias)


def build_reference_encoder(cfg: EncoderConfig) -> ConvEncoder:
    return ConvEncoder(cfg.reference_channels, cfg.activation, cfg.bias, out_dim=cfg.embed_dim)


def encoder_parameter_count(channels: tuple[int, ...], bias: bool, out_dim: int | None = None) -> int:
    """Closed-form parameter count of a ConvEncoder."""
    total, in_channels = 0, 3
    for width in channels:
        total += in_channels * width * 9 + (width if bias else 0)
        in_channels = width
    if out_dim is not None:
        total += in_channels * out_dim + (out_dim if bias else 0)
    return total


def check_divisible(height: int, width: int, stride: int) -> None:
    """
    Raise StrideError unless both image dimensions are multiples of stride.

    Example:
        >>> check_divisible(250, 250, 16)
        Traceback (most recent call last):
        StrideError: ...
    """
    if height % stride or width % stride:
        raise StrideError(f"Image {width}x{height} is not divisible by stride {stride}")


def check_finite(values: torch.Tensor, name: str) -> None:
    if not torch.isfinite(values).all():
        raise NonFiniteFeatureError(f"{name} contains non-finite values")


def encode_query(images: torch.Tensor, encoder: ConvEncoder, debug_checks: bool = False) -> FeatureMap:
    """
    Encode query images.

    Args:
        images: (B, 3, H, W) or (3, H, W) float tensor
        encoder: Query ConvEncoder
        debug_checks: Assert all features are finite

    Returns:
        FeatureMap with frame "query" and grid (H/S, W/S)

    Raises:
        StrideError: If H or W is not divisible by S
    """
    return _encode(images, encoder, "query", debug_checks)


def encode_reference(
    images: torch.Tensor, encoder: ConvEncoder, debug_checks: bool = False
) -> FeatureMap:
    """
    Encode reference images to d channels per location.

    Raises:
        StrideError: If H or W is not divisible by S
    """
    return _encode(images, encoder, "reference", debug_checks)


def _encode(images: torch.Tensor, encoder: ConvEncoder, frame: Frame, debug_checks: bool) -> FeatureMap:
    if images.dim() == 3:
        images = images.unsqueeze(0)
    height, width = int(images.shape[-2]), int(images.shape[-1])
    check_divisible(height, width, encoder.stride)

    values = encoder(images)
    expected = (height // encoder.stride, width // encoder.stride)
    if tuple(values.shape[-2:]) != expected:
        raise StrideError(f"{frame} encoder produced grid {tuple(values.shape[-2:])}, expected {expected}")
    if debug_checks:
        check_finite(values, f"{frame} features")
    return FeatureMap(values=values, stride=encoder.stride, frame=frame)


def flatten_reference(fmap: FeatureMap) -> torch.Tensor:
    """
    Reshape reference features to location vectors.

    Returns:
        (B, H'*W', d) tensor, rows in row-major (h, w) order

    Example:
        >>> flatten_reference(fmap).shape   # 64x64 grid, d=512
        torch.Size([1, 4096, 512])
    """
    if fmap.frame != "reference":
        raise ValueError(f"flatten_reference expects a reference map, got {fmap.frame}")
    return fmap.values.flatten(start_dim=-2).transpose(-1, -2)


def unflatten_reference(vectors: torch.Tensor, grid: tuple[int, int], stride: int) -> FeatureMap:
    """Inverse of flatten_reference."""
    height, width = grid
    if vectors.shape[-2] != height * width:
        raise ValueError(f"{vectors.shape[-2]} location vectors do not fill a {height}x{width} grid")
    values = vectors.transpose(-1, -2).unflatten(-1, (height, width))
    return FeatureMap(values=values, stride=stride, frame="reference")


def image_to_tensor(image: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """uint8 (H, W, 3) array -> (3, H, W) tensor scaled to [0, 1]."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"Expected an (H, W, 3) image, got {image.shape}")
    return torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1).to(dtype) / 255.0
