"""Training configuration.

Config files are line-oriented ``key = value`` text; ``#`` starts a comment,
blank lines are ignored, tuples are comma-separated::

    # desk-scale overfit run
    learning_rate = 0.001
    batch_size = 8
    anchor = auto
    max_steps = 300
"""

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import torch
from dotenv import load_dotenv

from core.encoders import ACTIVATIONS, EncoderConfig
from core.model import ModelConfig
from objective.losses import ObjectiveConfig
from pipeline.logging_config import LOG_LEVELS

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class TrainConfig:
    """
    Training run configuration.

    Attributes:
        learning_rate: Adam step size (constant, no decay)
        batch_size: Pairs per step
        epochs: Passes over the training split
        seed: Seeds initialization, data order and generation
        use_mope: Click position encoding (False: global average pooling)
        use_cvmf_concat: Append the attention channel before the head
        use_similarity_loss: Include the attention similarity loss
        anchor: "auto" (mean training box size) or (a_w, a_h) pixels
        stride: Encoder stride S
        query_channels: Query stage widths (last is C)
        reference_channels: Reference stage widths
        embed_dim: Embedding dimension d
        head_hidden: Head 3x3 width
        activation: "relu" or "silu"
        bias: Conv biases
        negative_aggregation: "mean" or "min" over similarity negatives
        negative_scope: "batch" or "image"
        similarity_reduction: "sum" or "mean" of the per-map similarity terms
        w_cn, w_reg, w_s: Loss weights
        max_steps: Step budget (None: epochs only)
        dtype: "float32" or "float64"
        log_every: Console loss line interval (the training log gets every step)
        debug_checks: Finiteness assertions in the forward pass
        log_level: Logging level of the CLI

    Example:
        >>> cfg = TrainConfig(learning_rate=1e-3, max_steps=300)
        >>> cfg.validate()
    """

    learning_rate: float = 1e-4
    batch_size: int = 8
    epochs: int = 24
    seed: int = 0

    use_mope: bool = True
    use_cvmf_concat: bool = True
    use_similarity_loss: bool = True

    anchor: str | tuple[float, float] = "auto"
    stride: int = 16
    query_channels: tuple[int, ...] = (16, 32, 64, 256)
    reference_channels: tuple[int, ...] = (16, 32, 64, 128)
    embed_dim: int = 512
    head_hidden: int = 64
    activation: str = "relu"
    bias: bool = True

    negative_aggregation: str = "mean"
    negative_scope: str = "batch"
    similarity_reduction: str = "sum"
    w_cn: float = 1.0
    w_reg: float = 1.0
    w_s: float = 1.0

    max_steps: int | None = None
    dtype: str = "float32"
    log_every: int = 10
    debug_checks: bool = False
    log_level: str = "INFO"

    def validate(self) -> None:
        """
        Validate configuration.

        Raises:
            ValueError: If configuration is invalid
        """
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1 or None, got {self.max_steps}")
        if self.anchor != "auto":
            if len(self.anchor) != 2 or min(self.anchor) <= 0:
                raise ValueError(f"anchor must be 'auto' or two positive sizes, got {self.anchor}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {tuple(DTYPES)}, got {self.dtype!r}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")
        if self.log_level.upper() not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {LOG_LEVELS}, got {self.log_level!r}")
        # Shape and loss options validate in their own dataclasses
        self.encoder_config()
        self.objective_config()

    @property
    def torch_dtype(self) -> torch.dtype:
        return DTYPES[self.dtype]

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            stride=self.stride,
            query_channels=self.query_channels,
            reference_channels=self.reference_channels,
            embed_dim=self.embed_dim,
            bias=self.bias,
            activation=self.activation,
            debug_checks=self.debug_checks,
        )

    def model_config(self, anchor: tuple[float, float] | None = None) -> ModelConfig:
        """
        ModelConfig of this run.

        Args:
            anchor: Resolved anchor; required when self.anchor is "auto"
        """
        if anchor is None:
            if self.anchor == "auto":
                raise ValueError("anchor is 'auto'; resolve it from the training split first")
            anchor = self.anchor  # type: ignore[assignment]
        return ModelConfig(
            encoder=self.encoder_config(),
            head_hidden=self.head_hidden,
            anchor=anchor,
            use_mope=self.use_mope,
            use_cvmf_concat=self.use_cvmf_concat,
            seed=self.seed,
        )

    def objective_config(self) -> ObjectiveConfig:
        return ObjectiveConfig(
            w_cn=self.w_cn,
            w_reg=self.w_reg,
            w_s=self.w_s,
            use_similarity_loss=self.use_similarity_loss,
            negative_aggregation=self.negative_aggregation,  # type: ignore[arg-type]
            negative_scope=self.negative_scope,  # type: ignore[arg-type]
            similarity_reduction=self.similarity_reduction,  # type: ignore[arg-type]
        )

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"Unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**data)

    def to_file(self, path: str | Path) -> Path:
        """Write `key = value` lines readable by from_file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["# mogeo training config"]
        lines += [f"{name} = {_format_value(value)}" for name, value in self.to_dict().items()]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        """
        Parse a `key = value` config file.

        Raises:
            ValueError: Unknown key or unparsable value (names key and line)
        """
        path = Path(path)
        defaults = cls()
        types = defaults.to_dict()
        values: dict[str, Any] = {}

        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _parse_value(key, value, types[key])
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: bad value for {key!r}: {e}") from e

        config = cls(**values)
        config.validate()
        return config

    @classmethod
    def from_env(cls, path: str | Path | None = None) -> "TrainConfig":
        """
        Load a config (file or defaults) and apply environment overrides.

        Optional env vars (a .env file is honoured):
            MOGEO_SEED - seed
            MOGEO_MAX_STEPS - step budget
            MOGEO_LOG_LEVEL - logging level
        """
        load_dotenv()
        config = cls.from_file(path) if path else cls()

        if seed := os.getenv("MOGEO_SEED"):
            config.seed = int(seed)
        if max_steps := os.getenv("MOGEO_MAX_STEPS"):
            config.max_steps = int(max_steps)
        if log_level := os.getenv("MOGEO_LOG_LEVEL"):
            config.log_level = log_level.upper()

        config.validate()
        return config


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(key: str, raw: str, default: Any) -> Any:
    if key == "anchor":
        if raw.lower() == "auto":
            return "auto"
        parts = tuple(float(p) for p in raw.split(","))
        if len(parts) != 2:
            raise ValueError("anchor needs 'auto' or 'w,h'")
        return parts
    if key == "max_steps":
        return None if raw.lower() in ("none", "") else int(raw)
    if isinstance(default, bool):
        lowered = raw.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(p) for p in raw.split(","))
    return raw
