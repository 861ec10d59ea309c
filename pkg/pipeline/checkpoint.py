"""Checkpoint archive: parameters, configs, optimizer, step and RNG state.

The archive is a ``torch.save`` dict with the header ``mogeo-ckpt-v1``.
Writes go through a file lock so a reader never sees a partial archive.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch
from filelock import FileLock

from core.model import MOGeoModel, ModelConfig, build_model
from data.pairs import AnnotatedPair
from pipeline.config import TrainConfig

logger = logging.getLogger(__name__)

CHECKPOINT_HEADER = "mogeo-ckpt-v1"
LOCK_TIMEOUT = 10


class CheckpointMismatchError(ValueError):
    """Bad header, incompatible parameters or data that does not fit the model."""


@dataclass
class Checkpoint:
    """
    Loaded checkpoint.

    Attributes:
        model_config: Architecture of the saved model
        train_config: Run configuration
        state_dict: Parameters keyed by hierarchical names
        optimizer: Optimizer state (None when not saved)
        step: Optimizer steps taken
        rng_state: torch CPU RNG state at save time
    """

    model_config: ModelConfig
    train_config: TrainConfig
    state_dict: dict[str, torch.Tensor]
    optimizer: dict[str, Any] | None = None
    step: int = 0
    rng_state: torch.Tensor | None = field(default=None, repr=False)

    def build(self) -> MOGeoModel:
        """Model with the saved parameters, in the saved dtype."""
        dtype = next(iter(self.state_dict.values())).dtype
        model = build_model(self.model_config, dtype)
        try:
            model.load_state_dict(self.state_dict, strict=True)
        except RuntimeError as e:
            raise CheckpointMismatchError(f"Parameters do not fit the saved config: {e}") from e
        return model

    def restore_rng_state(self) -> None:
        """
        Put the global torch CPU RNG back to its state at save time.

        Raises:
            CheckpointMismatchError: The archive carries no RNG state
        """
        if self.rng_state is None:
            raise CheckpointMismatchError("Checkpoint has no RNG state to restore")
        torch.set_rng_state(self.rng_state)


def save_checkpoint(
    path: str | Path,
    model: MOGeoModel,
    train_config: TrainConfig,
    optimizer: torch.optim.Optimizer | None = None,
    step: int = 0,
) -> Path:
    """
    Write a checkpoint archive.

    Example:
        >>> save_checkpoint(out / "checkpoint.pt", model, cfg, optimizer, step=300)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    archive = {
        "header": CHECKPOINT_HEADER,
        "model_config": model.config.to_dict(),
        "train_config": train_config.to_dict(),
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "step": int(step),
        "rng_state": torch.get_rng_state(),
    }
    with FileLock(f"{path}.lock", timeout=LOCK_TIMEOUT):
        torch.save(archive, path)
    logger.info(f"Checkpoint saved to {path} (step {step})")
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """
    Read a checkpoint archive.

    Raises:
        FileNotFoundError: No archive at path
        CheckpointMismatchError: Wrong header or missing entries
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint {path} not found")
    with FileLock(f"{path}.lock", timeout=LOCK_TIMEOUT):
        archive = torch.load(path, map_location="cpu", weights_only=True)

    if not isinstance(archive, dict) or archive.get("header") != CHECKPOINT_HEADER:
        found = archive.get("header") if isinstance(archive, dict) else type(archive).__name__
        raise CheckpointMismatchError(f"{path}: expected header {CHECKPOINT_HEADER!r}, got {found!r}")
    missing = {"model_config", "train_config", "state_dict"} - set(archive)
    if missing:
        raise CheckpointMismatchError(f"{path}: archive lacks {sorted(missing)}")

    return Checkpoint(
        model_config=ModelConfig.from_dict(archive["model_config"]),
        train_config=TrainConfig.from_dict(archive["train_config"]),
        state_dict=archive["state_dict"],
        optimizer=archive.get("optimizer"),
        step=int(archive.get("step", 0)),
        rng_state=archive.get("rng_state"),
    )


def check_compatible(model_config: ModelConfig, pairs: list[AnnotatedPair]) -> None:
    """
    Raise CheckpointMismatchError when the data cannot be fed to the model.
    """
    stride = model_config.encoder.stride
    for pair in pairs:
        for side, (width, height) in (("query", pair.query_size), ("reference", pair.reference_size)):
            if width % stride or height % stride:
                raise CheckpointMismatchError(
                    f"Pair {pair.pair_id}: {side} image {width}x{height} "
                    f"is not divisible by the model stride {stride}"
                )
