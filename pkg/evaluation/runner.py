"""
Dataset-level evaluation: detection records, the evaluation report and a
runner that localizes every click of a split.
"""

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from core.head import Detection
from data.geometry import BBox
from data.pairs import AnnotatedPair
from evaluation.metrics import THRESHOLDS, accI_at, iou

logger = logging.getLogger(__name__)

COUNT_BINS = (("I", 1, 3), ("II", 4, 6), ("III", 7, math.inf))


class MissingDetectionsError(ValueError):
    """Some (pair_id, obj_index) of the dataset has no detection record."""

    def __init__(self, missing: list[tuple[str, int]]):
        self.missing = missing
        shown = ", ".join(f"({pid}, {idx})" for pid, idx in missing[:10])
        more = f" and {len(missing) - 10} more" if len(missing) > 10 else ""
        super().__init__(f"Missing detections for {shown}{more}")


@dataclass(frozen=True)
class DetectionRecord:
    """One exported detection: `pair_id obj_index cx cy w h confidence`."""

    pair_id: str
    obj_index: int
    box: BBox
    confidence: float

    @classmethod
    def from_detection(cls, pair_id: str, detection: Detection) -> "DetectionRecord":
        return cls(pair_id, detection.object_index, detection.box, detection.confidence)

    def to_line(self) -> str:
        b = self.box
        return (
            f"{self.pair_id} {self.obj_index} {b.cx:.4f} {b.cy:.4f} {b.w:.4f} {b.h:.4f} "
            f"{self.confidence:.4f}"
        )


def write_detections(records: Iterable[DetectionRecord], path: str | Path) -> Path:
    """Write one record per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(r.to_line() + "\n" for r in records), encoding="utf-8")
    return path


def read_detections(path: str | Path) -> list[DetectionRecord]:
    """
    Parse a detection record file.

    Raises:
        ValueError: Malformed line (message carries path:line)
    """
    path = Path(path)
    records = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) != 7:
            raise ValueError(f"{path}:{lineno}: expected 7 fields, got {len(tokens)}")
        try:
            cx, cy, w, h, conf = (float(v) for v in tokens[2:])
            records.append(DetectionRecord(tokens[0], int(tokens[1]), BBox(cx, cy, w, h), conf))
        except ValueError as e:
            raise ValueError(f"{path}:{lineno}: {e}") from e
    return records


def count_category(n_objects: int) -> str:
    """Object-count bin: I (N <= 3), II (3 < N <= 6), III (N > 6)."""
    for name, low, high in COUNT_BINS:
        if low <= n_objects <= high:
            return name
    raise ValueError(f"Object count must be >= 1, got {n_objects}")


@dataclass
class ImageResult:
    """Per-image diagnostics."""

    pair_id: str
    ious: list[float]
    correct: dict[float, bool]

    @property
    def n_objects(self) -> int:
        return len(self.ious)


@dataclass
class EvalReport:
    """
    Evaluation of one split.

    Attributes:
        acc_025, acc_05: Object-level acc@0.25 and acc@0.5
        accI_025, accI_05: Image-level accI@0.25 and accI@0.5
        per_image: Per-image IoUs and correctness flags
        n_images: Number of images
        n_objects: Number of objects
        by_count: Metrics per object-count bin (I, II, III)
        baseline: Random-cell acc@0.25, when computed

    Example:
        >>> report = evaluate(pairs, records)
        >>> print(report.summary_line())
        0.9000 0.7500 0.8000 0.6000
    """

    acc_025: float
    acc_05: float
    accI_025: float
    accI_05: float
    per_image: list[ImageResult]
    n_images: int
    n_objects: int
    by_count: pd.DataFrame = field(default_factory=pd.DataFrame)
    baseline: float | None = None

    def __post_init__(self):
        """Validate rates."""
        for name in ("acc_025", "acc_05", "accI_025", "accI_05"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    def summary_line(self) -> str:
        """`acc@0.25 acc@0.5 accI@0.25 accI@0.5` to 4 decimals."""
        return f"{self.acc_025:.4f} {self.acc_05:.4f} {self.accI_025:.4f} {self.accI_05:.4f}"

    def to_text(self) -> str:
        """Human-readable report."""
        lines = [
            "MOGeo evaluation report",
            f"images   {self.n_images}",
            f"objects  {self.n_objects}",
            f"acc@0.25   {self.acc_025:.4f}",
            f"acc@0.5    {self.acc_05:.4f}",
            f"accI@0.25  {self.accI_025:.4f}",
            f"accI@0.5   {self.accI_05:.4f}",
        ]
        if self.baseline is not None:
            lines.append(f"random-cell acc@0.25  {self.baseline:.4f}")
        if not self.by_count.empty:
            lines += ["", "by object count", self.by_count.to_string(float_format=lambda v: f"{v:.4f}")]
        lines += ["", "per image"]
        for image in self.per_image:
            flags = " ".join(f"@{t}={int(ok)}" for t, ok in image.correct.items())
            ious = " ".join(f"{v:.4f}" for v in image.ious)
            lines.append(f"{image.pair_id} n={image.n_objects} {flags} iou {ious}")
        lines += ["", "summary " + self.summary_line()]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        """JSON-serializable form."""
        by_count = [
            {"category": str(category), **{str(k): _plain(v) for k, v in row.items()}}
            for category, row in self.by_count.iterrows()
        ]
        return {
            "acc@0.25": self.acc_025,
            "acc@0.5": self.acc_05,
            "accI@0.25": self.accI_025,
            "accI@0.5": self.accI_05,
            "n_images": self.n_images,
            "n_objects": self.n_objects,
            "baseline_acc@0.25": self.baseline,
            "by_count": by_count,
            "per_image": [
                {
                    "pair_id": r.pair_id,
                    "ious": r.ious,
                    "correct": {str(t): ok for t, ok in r.correct.items()},
                }
                for r in self.per_image
            ],
        }


def evaluate(dataset: Sequence[AnnotatedPair], detections: Iterable[DetectionRecord]) -> EvalReport:
    """
    Score detection records against a dataset.

    The result does not depend on record order.

    Raises:
        MissingDetectionsError: If any (pair_id, obj_index) lacks a record
        ValueError: Empty dataset or duplicate records
    """
    if not dataset:
        raise ValueError("Cannot evaluate an empty dataset")

    index: dict[tuple[str, int], DetectionRecord] = {}
    for record in detections:
        key = (record.pair_id, record.obj_index)
        if key in index:
            raise ValueError(f"Duplicate detection record for {key}")
        index[key] = record

    missing = [
        (pair.pair_id, obj.index)
        for pair in dataset
        for obj in pair.objects
        if (pair.pair_id, obj.index) not in index
    ]
    if missing:
        raise MissingDetectionsError(missing)

    per_image = []
    rows = []
    for pair in dataset:
        ious = [iou(index[(pair.pair_id, obj.index)].box, obj.box) for obj in pair.objects]
        correct = {t: all(v > t for v in ious) for t in THRESHOLDS}
        per_image.append(ImageResult(pair.pair_id, ious, correct))
        for v in ious:
            rows.append({"pair_id": pair.pair_id, "category": count_category(len(ious)), "iou": v})

    objects = pd.DataFrame(rows)
    all_ious = [r.ious for r in per_image]
    report = EvalReport(
        acc_025=float((objects["iou"] > 0.25).mean()),
        acc_05=float((objects["iou"] > 0.5).mean()),
        accI_025=accI_at(all_ious, 0.25),
        accI_05=accI_at(all_ious, 0.5),
        per_image=per_image,
        n_images=len(per_image),
        n_objects=len(objects),
        by_count=_by_count(objects, per_image),
    )
    logger.info(f"Evaluated {report.n_images} images / {report.n_objects} objects: {report.summary_line()}")
    return report


def _plain(value) -> float | None:
    return None if pd.isna(value) else float(value)


def _by_count(objects: pd.DataFrame, per_image: list[ImageResult]) -> pd.DataFrame:
    images = pd.DataFrame(
        {
            "category": [count_category(r.n_objects) for r in per_image],
            **{f"correct@{t}": [r.correct[t] for r in per_image] for t in THRESHOLDS},
        }
    )
    names = [name for name, _, _ in COUNT_BINS]
    grouped_objects = objects.groupby("category")["iou"]
    grouped_images = images.groupby("category")

    table = pd.DataFrame(index=pd.Index(names, name="category"))
    table["images"] = grouped_images.size().reindex(names, fill_value=0)
    table["objects"] = grouped_objects.size().reindex(names, fill_value=0)
    table["acc@0.25"] = grouped_objects.apply(lambda s: (s > 0.25).mean()).reindex(names)
    table["acc@0.5"] = grouped_objects.apply(lambda s: (s > 0.5).mean()).reindex(names)
    table["accI@0.25"] = grouped_images["correct@0.25"].mean().reindex(names)
    table["accI@0.5"] = grouped_images["correct@0.5"].mean().reindex(names)
    return table


class LocalizationRunner:
    """
    Localize every click of a list of pairs with a trained model.

    Example:
        >>> runner = LocalizationRunner(model)
        >>> records = runner.detect(pairs)
        >>> report = evaluate(pairs, records)
    """

    def __init__(self, model):
        """
        Args:
            model: MOGeoModel (any object with a localize method)
        """
        self.model = model

    def detect(self, pairs: Sequence[AnnotatedPair]) -> list[DetectionRecord]:
        records = []
        for pair in pairs:
            detections = self.model.localize(pair.query_image, pair.reference_image, pair.clicks)
            records.extend(DetectionRecord.from_detection(pair.pair_id, d) for d in detections)
        logger.debug(f"Localized {len(records)} objects in {len(pairs)} pairs")
        return records

    def run(self, pairs: Sequence[AnnotatedPair]) -> tuple[list[DetectionRecord], EvalReport]:
        records = self.detect(pairs)
        return records, evaluate(pairs, records)
