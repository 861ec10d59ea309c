"""Evaluation and timing reports for saved checkpoints."""

import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from core.model import count_parameters
from data.dataset import SPLIT_NAMES, read_dataset
from data.pairs import AnnotatedPair
from evaluation.metrics import random_cell_baseline
from evaluation.runner import EvalReport, LocalizationRunner, write_detections
from pipeline.checkpoint import check_compatible, load_checkpoint

logger = logging.getLogger(__name__)


def split_pairs_of(dataset_root: str | Path, split: str) -> list[AnnotatedPair]:
    """Pairs of one split of a dataset directory."""
    if split not in SPLIT_NAMES:
        raise ValueError(f"Unknown split {split!r}, expected one of {SPLIT_NAMES}")
    pairs, dataset_split = read_dataset(dataset_root)
    wanted = set(dataset_split.ids(split))
    selected = [p for p in pairs if p.pair_id in wanted]
    if not selected:
        raise ValueError(f"Split {split!r} of {dataset_root} is empty")
    return selected


def evaluate_checkpoint(
    checkpoint: str | Path,
    dataset_root: str | Path,
    split: str = "test",
    out: str | Path | None = None,
) -> EvalReport:
    """
    Localize a split with a checkpoint and score it.

    Writes detections_<split>.txt, report_<split>.txt and report_<split>.json
    into `out` (default: <checkpoint dir>/eval).

    Raises:
        CheckpointMismatchError: Checkpoint does not fit the data
    """
    ckpt = load_checkpoint(checkpoint)
    pairs = split_pairs_of(dataset_root, split)
    check_compatible(ckpt.model_config, pairs)
    model = ckpt.build()

    records, report = LocalizationRunner(model).run(pairs)
    report.baseline = random_cell_baseline(
        pairs, ckpt.model_config.anchor, ckpt.model_config.encoder.stride, 0.25
    )

    out_dir = Path(out) if out is not None else Path(checkpoint).parent / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_detections(records, out_dir / f"detections_{split}.txt")
    (out_dir / f"report_{split}.txt").write_text(report.to_text(), encoding="utf-8")
    with open(out_dir / f"report_{split}.json", "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)

    logger.info(f"Evaluation of {split} written to {out_dir}")
    return report


@dataclass
class TimingReport:
    """
    Inference cost summary (informational).

    Attributes:
        parameter_count: Parameters of the loaded model
        analytic_count: Closed-form count from the configured layer shapes
        mean_seconds: Mean wall time per pair
        mean_seconds_doubled: Mean wall time per pair with every click list doubled
        n_pairs: Pairs timed
        repetitions: Passes over the pairs
    """

    parameter_count: int
    analytic_count: int
    mean_seconds: float
    mean_seconds_doubled: float
    n_pairs: int
    repetitions: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_text(self) -> str:
        return (
            f"parameters        {self.parameter_count}\n"
            f"analytic count    {self.analytic_count}\n"
            f"pairs timed       {self.n_pairs} x {self.repetitions}\n"
            f"mean time / pair  {self.mean_seconds * 1000:.3f} ms\n"
            f"with 2m clicks    {self.mean_seconds_doubled * 1000:.3f} ms\n"
        )


def timing_report(
    checkpoint: str | Path, dataset_root: str | Path, split: str | None = None, repetitions: int = 10
) -> TimingReport:
    """
    Parameter count and mean per-pair inference time.

    Args:
        checkpoint: Saved archive
        dataset_root: Dataset directory
        split: Split to time (default: first non-empty of test, validation, train)
        repetitions: Passes over the pairs
    """
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    ckpt = load_checkpoint(checkpoint)
    model = ckpt.build()

    if split is None:
        pairs, dataset_split = read_dataset(dataset_root)
        split = next(name for name in ("test", "validation", "train") if dataset_split.ids(name))
    pairs = split_pairs_of(dataset_root, split)

    def _time(doubled: bool) -> float:
        samples = []
        for _ in range(repetitions):
            for pair in pairs:
                clicks = pair.clicks * 2 if doubled else pair.clicks
                start = time.perf_counter()
                model.localize(pair.query_image, pair.reference_image, clicks)
                samples.append(time.perf_counter() - start)
        return float(np.mean(samples))

    report = TimingReport(
        parameter_count=sum(p.numel() for p in model.parameters()),
        analytic_count=count_parameters(ckpt.model_config),
        mean_seconds=_time(doubled=False),
        mean_seconds_doubled=_time(doubled=True),
        n_pairs=len(pairs),
        repetitions=repetitions,
    )
    logger.info(f"Timing: {report.parameter_count} parameters, {report.mean_seconds * 1000:.2f} ms/pair")
    return report
