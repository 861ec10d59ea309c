"""
Training loop.

Adam at a constant learning rate over epochs of seeded shuffles. Each step
writes a ``step l_cn l_reg l_s total`` line to ``train_log.txt`` in the run
directory; the final state goes to ``checkpoint.pt``.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import pandas as pd
import torch

from core.model import MOGeoModel, build_model
from data.dataset import read_dataset
from data.pairs import AnnotatedPair
from objective.losses import LossBreakdown, total_loss
from pipeline.batching import collate, iterate_batches, mean_box_size
from pipeline.checkpoint import check_compatible, save_checkpoint
from pipeline.config import TrainConfig

logger = logging.getLogger(__name__)

TRAIN_LOG_NAME = "train_log.txt"
CHECKPOINT_NAME = "checkpoint.pt"


class NonFiniteLossError(FloatingPointError):
    """A loss term became NaN or Inf."""

    def __init__(self, step: int, terms: list[str], values: dict[str, float]):
        self.step = step
        self.terms = terms
        shown = ", ".join(f"{t}={values[t]}" for t in terms)
        super().__init__(f"Non-finite loss at step {step}: {shown}")


@dataclass
class TrainResult:
    """
    Outcome of a training run.

    Attributes:
        model: Trained model
        checkpoint_path: Saved archive (None when not saved)
        steps: Optimizer steps taken
        anchor: Anchor the model decodes against
        history: One row per step (step, l_cn, l_reg, l_s, total)
    """

    model: MOGeoModel
    checkpoint_path: Path | None
    steps: int
    anchor: tuple[float, float]
    history: pd.DataFrame

    @property
    def first_loss(self) -> float:
        return float(self.history["total"].iloc[0])

    @property
    def final_loss(self) -> float:
        return float(self.history["total"].iloc[-1])


def resolve_anchor(config: TrainConfig, pairs: list[AnnotatedPair]) -> tuple[float, float]:
    """Configured anchor, or the mean training box size for "auto"."""
    if config.anchor == "auto":
        anchor = mean_box_size(pairs)
        logger.info(f"Auto anchor from {len(pairs)} training pairs: ({anchor[0]:.2f}, {anchor[1]:.2f})")
        return anchor
    return float(config.anchor[0]), float(config.anchor[1])  # type: ignore[index]


class Trainer:
    """
    Fit a model to a list of pairs.

    Example:
        >>> trainer = Trainer(TrainConfig(learning_rate=1e-3, max_steps=300))
        >>> result = trainer.fit(train_pairs, out_dir="runs/overfit")
        >>> result.final_loss < 0.1 * result.first_loss
    """

    def __init__(self, config: TrainConfig):
        config.validate()
        self.config = config

    def planned_steps(self, n_pairs: int) -> int:
        per_epoch = math.ceil(n_pairs / self.config.batch_size)
        steps = per_epoch * self.config.epochs
        if self.config.max_steps is not None:
            steps = min(steps, self.config.max_steps)
        return steps

    def fit(self, pairs: list[AnnotatedPair], out_dir: str | Path | None = None) -> TrainResult:
        """
        Train on the pairs.

        Args:
            pairs: Training pairs (non-empty, shared image sizes)
            out_dir: Run directory for the training log and checkpoint;
                None keeps everything in memory

        Raises:
            NonFiniteLossError: A loss term is NaN or Inf
        """
        cfg = self.config
        if not pairs:
            raise ValueError("Cannot train on an empty dataset")

        anchor = resolve_anchor(cfg, pairs)
        torch.manual_seed(cfg.seed)
        model = build_model(cfg.model_config(anchor), cfg.torch_dtype)
        check_compatible(model.config, pairs)
        model.train()
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
        objective = cfg.objective_config()

        total_steps = self.planned_steps(len(pairs))
        logger.info(
            f"Training on {len(pairs)} pairs for {total_steps} steps "
            f"(batch {cfg.batch_size}, lr {cfg.learning_rate})"
        )

        out = Path(out_dir) if out_dir is not None else None
        log_file = None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            cfg.to_file(out / "config.txt")
            log_file = open(out / TRAIN_LOG_NAME, "w", encoding="utf-8")
            log_file.write("# step l_cn l_reg l_s total\n")

        history = []
        step = 0
        try:
            for epoch in range(cfg.epochs):
                for batch_pairs in iterate_batches(pairs, cfg.batch_size, cfg.seed, epoch):
                    if step >= total_steps:
                        break
                    step += 1
                    breakdown = self._step(model, optimizer, batch_pairs, objective, step)
                    history.append({"step": step, **breakdown.as_floats()})
                    if log_file is not None:
                        log_file.write(breakdown.log_line(step) + "\n")
                    if step % cfg.log_every == 0 or step == 1:
                        logger.info(f"step {step}/{total_steps} " + breakdown.log_line(step).split(" ", 1)[1])
                if step >= total_steps:
                    break
                logger.debug(f"Epoch {epoch + 1} done at step {step}")
        finally:
            if log_file is not None:
                log_file.close()

        checkpoint_path = None
        if out is not None:
            checkpoint_path = save_checkpoint(out / CHECKPOINT_NAME, model, cfg, optimizer, step)

        return TrainResult(
            model=model,
            checkpoint_path=checkpoint_path,
            steps=step,
            anchor=anchor,
            history=pd.DataFrame(history, columns=["step", "l_cn", "l_reg", "l_s", "total"]),
        )

    def _step(self, model, optimizer, batch_pairs, objective, step: int) -> LossBreakdown:
        batch = collate(batch_pairs, self.config.torch_dtype)
        output = model(batch.query, batch.reference, batch.points, batch.image_index)
        breakdown = total_loss(
            model.predictions(output), batch.boxes, output.attention, batch.image_index, objective
        )
        bad = breakdown.nonfinite_terms()
        if bad:
            raise NonFiniteLossError(step, bad, breakdown.as_floats())

        optimizer.zero_grad()
        breakdown.total.backward()
        optimizer.step()
        return breakdown


def train(config: TrainConfig, dataset_root: str | Path, out: str | Path) -> TrainResult:
    """
    Train on the train split of a dataset directory.

    Writes config.txt, train_log.txt and checkpoint.pt into `out`.
    """
    pairs, split = read_dataset(dataset_root)
    train_ids = set(split.train)
    train_pairs = [p for p in pairs if p.pair_id in train_ids]
    if not train_pairs:
        raise ValueError(f"Dataset {dataset_root} has an empty train split")
    return Trainer(config).fit(train_pairs, out)
