"""
Cross-view fusion: cosine attention of each object vector against every
reference location, then attention-weighted reference features with the
attention map appended as one extra channel.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass
class AttentionMap:
    """
    Cosine attention of one object over the reference grid.

    Attributes:
        values: (H', W') tensor, entries in [-1, 1]
        object_index: Click index the map belongs to
    """

    values: torch.Tensor
    object_index: int

    def __post_init__(self):
        """Validate the cosine bound."""
        if self.values.dim() != 2:
            raise ValueError(f"AttentionMap must be 2-D, got shape {tuple(self.values.shape)}")
        if not torch.isfinite(self.values).all():
            raise ValueError(f"AttentionMap {self.object_index} is not finite")
        if self.values.abs().max() > 1.0:
            raise ValueError(f"AttentionMap {self.object_index} leaves [-1, 1]")

    @property
    def argmax_cell(self) -> tuple[int, int]:
        """Row-major first maximum."""
        flat = int(torch.argmax(self.values.flatten()))
        return divmod(flat, int(self.values.shape[1]))


def attention(
    object_vectors: torch.Tensor, location_vectors: torch.Tensor, grid: tuple[int, int]
) -> torch.Tensor:
    """
    Cosine similarity between object vectors and reference location vectors.

    Zero vectors normalize to zero and give zero attention.

    Args:
        object_vectors: (d,) or (M, d)
        location_vectors: (L, d) shared by all objects, or (M, L, d) per object
        grid: (H', W') with H' * W' = L

    Returns:
        (H', W') or (M, H', W') attention, values clamped to [-1, 1]

    Example:
        >>> maps = attention(v_q, flatten_reference(fmap)[0], fmap.grid)
    """
    single = object_vectors.dim() == 1
    queries = object_vectors.unsqueeze(0) if single else object_vectors
    if queries.shape[-1] != location_vectors.shape[-1]:
        raise ValueError(
            f"Object dim {queries.shape[-1]} != location dim {location_vectors.shape[-1]}"
        )
    height, width = grid
    if location_vectors.shape[-2] != height * width:
        raise ValueError(f"{location_vectors.shape[-2]} locations do not fill grid {grid}")

    q_hat = F.normalize(queries, dim=-1)
    r_hat = F.normalize(location_vectors, dim=-1)
    if r_hat.dim() == 2:
        scores = q_hat @ r_hat.T
    else:
        scores = torch.einsum("md,mld->ml", q_hat, r_hat)

    maps = scores.clamp(-1.0, 1.0).view(-1, height, width)
    return maps[0] if single else maps


def modulate(attention_maps: torch.Tensor, reference_features: torch.Tensor) -> torch.Tensor:
    """
    Weight reference features by attention, broadcast over channels.

    Args:
        attention_maps: (M, H', W')
        reference_features: (M, d, H', W')
    """
    _check_grid(attention_maps, reference_features, "modulate")
    return attention_maps.unsqueeze(-3) * reference_features


def fuse_and_concat(modulated: torch.Tensor, attention_maps: torch.Tensor) -> torch.Tensor:
    """Append the attention map as the last channel: (M, d, H', W') -> (M, d + 1, H', W')."""
    _check_grid(attention_maps, modulated, "fuse_and_concat")
    return torch.cat([modulated, attention_maps.unsqueeze(-3)], dim=-3)


def _check_grid(attention_maps: torch.Tensor, features: torch.Tensor, op: str) -> None:
    if attention_maps.shape[-2:] != features.shape[-2:]:
        raise ValueError(
            f"{op}: attention grid {tuple(attention_maps.shape[-2:])} "
            f"!= feature grid {tuple(features.shape[-2:])}"
        )
