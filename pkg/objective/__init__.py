"""Training objective."""

from .losses import (
    LossBreakdown,
    ObjectiveConfig,
    confidence_loss,
    regression_loss,
    similarity_loss,
    total_loss,
)

__all__ = [
    "LossBreakdown",
    "ObjectiveConfig",
    "confidence_loss",
    "regression_loss",
    "similarity_loss",
    "total_loss",
]
