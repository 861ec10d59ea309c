"""
On-disk dataset format: PNG images, one line-record annotation file per
pair and a manifest listing split membership.

Layout under the dataset root::

    manifest.txt
    images/<pair_id>_query.png
    images/<pair_id>_reference.png
    annotations/<pair_id>.txt
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from filelock import FileLock
from PIL import Image

from data.geometry import BBox, ClickPoint
from data.pairs import AnnotatedPair, ObjectAnnotation, TransformRecord

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "validation", "test")
DEFAULT_FRACTIONS = (0.656, 0.164, 0.180)
DEFAULT_AREA_BINS = (0.0, 16.0**2, 32.0**2, 64.0**2, 128.0**2, 256.0**2, math.inf)

MANIFEST_NAME = "manifest.txt"
MANIFEST_HEADER = "mogeo-dataset v1"

# Boxes are stored to 4 decimals; rounding may push a clipped edge past the border
_CONTAINMENT_TOLERANCE = 1e-3


class DatasetFormatError(ValueError):
    """Malformed manifest or annotation record (message carries path:line)."""


class AnnotationInvariantError(ValueError):
    """A loaded record violates a type invariant (message names the pair_id)."""


@dataclass
class DatasetSplit:
    """
    Disjoint train/validation/test partition of pair ids.

    Attributes:
        train: Training pair ids
        validation: Validation pair ids
        test: Test pair ids
        fractions: Requested (train, validation, test) fractions, summing to 1
    """

    train: list[str] = field(default_factory=list)
    validation: list[str] = field(default_factory=list)
    test: list[str] = field(default_factory=list)
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS

    def __post_init__(self):
        """Validate disjointness and fractions."""
        _check_fractions(self.fractions)
        seen: set[str] = set()
        for name in SPLIT_NAMES:
            ids = getattr(self, name)
            overlap = seen.intersection(ids)
            if overlap or len(set(ids)) != len(ids):
                raise ValueError(f"Split {name} repeats pair ids: {sorted(overlap) or ids}")
            seen.update(ids)

    def ids(self, name: str) -> list[str]:
        """Pair ids of one split."""
        if name not in SPLIT_NAMES:
            raise ValueError(f"Unknown split {name!r}, expected one of {SPLIT_NAMES}")
        return list(getattr(self, name))

    def all_ids(self) -> list[str]:
        return self.train + self.validation + self.test

    def split_of(self, pair_id: str) -> str:
        for name in SPLIT_NAMES:
            if pair_id in getattr(self, name):
                return name
        raise KeyError(pair_id)

    @property
    def counts(self) -> dict[str, int]:
        return {name: len(getattr(self, name)) for name in SPLIT_NAMES}


@dataclass
class Manifest:
    """Summary returned by write_dataset."""

    root: Path
    counts: dict[str, int]
    fractions: tuple[float, float, float]
    alignments: dict[str, int]

    @property
    def n_pairs(self) -> int:
        return sum(self.counts.values())


@dataclass
class SizeHistogram:
    """
    Histogram of box areas in px².

    Attributes:
        edges: Bin edges, half-open on the right
        counts: Boxes per bin (len(edges) - 1 entries)
        mean: Mean area
        median: Median area
        n_boxes: Number of boxes
    """

    edges: tuple[float, ...]
    counts: list[int]
    mean: float
    median: float
    n_boxes: int

    def to_frame(self) -> pd.DataFrame:
        """One row per bin with its edges and count."""
        return pd.DataFrame(
            {"low": self.edges[:-1], "high": self.edges[1:], "count": self.counts}
        )


def split_pairs(
    pair_ids: list[str],
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> DatasetSplit:
    """
    Partition pair ids with a seeded shuffle and largest-remainder counts.

    Args:
        pair_ids: Ids to partition (unique)
        fractions: (train, validation, test) fractions summing to 1
        seed: Shuffle seed

    Returns:
        DatasetSplit; ids inside each split keep their input order

    Example:
        >>> split = split_pairs([f"{i:05d}" for i in range(100)])
        >>> split.counts
        {'train': 66, 'validation': 16, 'test': 18}
    """
    if not pair_ids:
        raise ValueError("Cannot split an empty id list")
    if len(set(pair_ids)) != len(pair_ids):
        raise ValueError("pair_ids must be unique")
    _check_fractions(fractions)

    counts = largest_remainder(len(pair_ids), fractions)
    order = np.random.default_rng(seed).permutation(len(pair_ids))

    buckets: dict[str, list[int]] = {}
    start = 0
    for name, count in zip(SPLIT_NAMES, counts):
        buckets[name] = sorted(int(i) for i in order[start : start + count])
        start += count

    return DatasetSplit(
        **{name: [pair_ids[i] for i in buckets[name]] for name in SPLIT_NAMES},
        fractions=tuple(float(f) for f in fractions),
    )


def largest_remainder(total: int, fractions: tuple[float, ...]) -> list[int]:
    """
    Apportion `total` items by fractions; leftover items go to the largest
    remainders, ties in input order.
    """
    quotas = [total * f for f in fractions]
    counts = [int(math.floor(q)) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    leftover = total - sum(counts)
    for i in sorted(range(len(fractions)), key=lambda j: (-remainders[j], j))[:leftover]:
        counts[i] += 1
    return counts


def write_dataset(pairs: list[AnnotatedPair], split: DatasetSplit, root: str | Path) -> Manifest:
    """
    Write images, annotations and the manifest.

    Args:
        pairs: Pairs to write
        split: Partition covering exactly the given pairs
        root: Output directory (created)

    Returns:
        Manifest with per-split counts

    Raises:
        ValueError: Empty pair list, duplicate ids, or split/pairs mismatch
        OSError: I/O failure
    """
    if not pairs:
        raise ValueError("Cannot write an empty dataset")
    ids = [pair.pair_id for pair in pairs]
    if len(set(ids)) != len(ids):
        raise ValueError("Duplicate pair ids in dataset")
    split_ids = set(split.all_ids())
    if split_ids != set(ids):
        missing = sorted(set(ids) - split_ids)
        extra = sorted(split_ids - set(ids))
        raise ValueError(f"Split does not match pairs: missing {missing[:5]}, extra {extra[:5]}")

    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "annotations").mkdir(parents=True, exist_ok=True)

    for pair in pairs:
        query_rel = f"images/{pair.pair_id}_query.png"
        reference_rel = f"images/{pair.pair_id}_reference.png"
        Image.fromarray(pair.query_image).save(root / query_rel)
        Image.fromarray(pair.reference_image).save(root / reference_rel)
        text = format_annotation(pair, query_rel, reference_rel)
        (root / "annotations" / f"{pair.pair_id}.txt").write_text(text, encoding="utf-8")

    manifest_path = root / MANIFEST_NAME
    lines = [MANIFEST_HEADER, "fractions " + " ".join(repr(f) for f in split.fractions)]
    lines += [f"pair {pid} {split.split_of(pid)}" for pid in ids]

    # Single writer for the manifest
    with FileLock(f"{manifest_path}.lock", timeout=10):
        manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    alignments: dict[str, int] = {}
    for pair in pairs:
        alignments[pair.alignment] = alignments.get(pair.alignment, 0) + 1

    manifest = Manifest(
        root=root, counts=split.counts, fractions=split.fractions, alignments=alignments
    )
    logger.info(f"Wrote {manifest.n_pairs} pairs to {root} {manifest.counts}")
    return manifest


def read_dataset(root: str | Path) -> tuple[list[AnnotatedPair], DatasetSplit]:
    """
    Load a dataset written by write_dataset, validating every invariant.

    Returns:
        (pairs in manifest order, split)

    Raises:
        FileNotFoundError: No manifest under root
        DatasetFormatError: Malformed record (path:line in the message)
        AnnotationInvariantError: Invariant violation (pair_id in the message)
    """
    root = Path(root)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"No {MANIFEST_NAME} under {root}")

    with FileLock(f"{manifest_path}.lock", timeout=10):
        manifest_lines = manifest_path.read_text(encoding="utf-8").splitlines()

    entries, fractions = _parse_manifest(manifest_path, manifest_lines)

    pairs = [_read_pair(root, pair_id) for pair_id, _ in entries]
    buckets: dict[str, list[str]] = {name: [] for name in SPLIT_NAMES}
    for pair_id, name in entries:
        buckets[name].append(pair_id)

    try:
        split = DatasetSplit(**buckets, fractions=fractions)
    except ValueError as e:
        raise DatasetFormatError(f"{manifest_path}: {e}") from e

    logger.info(f"Loaded {len(pairs)} pairs from {root} {split.counts}")
    return pairs, split


def format_annotation(pair: AnnotatedPair, query_rel: str, reference_rel: str) -> str:
    """Render the line-record annotation of one pair."""
    q_w, q_h = pair.query_size
    r_w, r_h = pair.reference_size
    lines = [
        pair.pair_id,
        f"query {query_rel} {q_w} {q_h}",
        f"reference {reference_rel} {r_w} {r_h}",
        f"alignment {pair.alignment}",
    ]
    for obj in pair.objects:
        line = (
            f"obj {obj.index} click {obj.click.x:.4f} {obj.click.y:.4f} "
            f"box {_fmt_box(obj.box)}"
        )
        if obj.query_box is not None:
            line += f" qbox {_fmt_box(obj.query_box)}"
        line += f" id {obj.identity}"
        lines.append(line)

    record = pair.transform
    if record is not None:
        x0, y0, ww, wh = record.window
        out_w, out_h = record.output_size
        lines.append(
            f"transform flip {int(record.flip)} scale {record.scale!r} crop {record.crop!r} "
            f"window {x0!r} {y0!r} {ww!r} {wh!r} output {out_w} {out_h} "
            f"affine {record.a_x!r} {record.b_x!r} {record.a_y!r} {record.b_y!r}"
        )
        lines.append("retained " + " ".join(str(i) for i in record.retained))
        for box in record.remapped:
            lines.append("remapped " + " ".join(repr(v) for v in box.as_tuple()))

    return "\n".join(lines) + "\n"


def size_distribution(
    pairs: list[AnnotatedPair],
    side: str = "reference",
    bins: tuple[float, ...] = DEFAULT_AREA_BINS,
) -> SizeHistogram:
    """
    Histogram of object box areas on one side of the pairs.

    Args:
        pairs: Non-empty list of pairs
        side: "reference" (ground-truth boxes) or "query" (query-side boxes)
        bins: Increasing bin edges in px², half-open on the right

    Returns:
        SizeHistogram with counts, mean and median

    Example:
        >>> hist = size_distribution(pairs, side="reference")
        >>> hist.mean, hist.median
    """
    if not pairs:
        raise ValueError("size_distribution needs at least one pair")
    if side not in ("reference", "query"):
        raise ValueError(f"side must be 'reference' or 'query', got {side!r}")
    edges = tuple(float(b) for b in bins)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError(f"bins must be strictly increasing with >= 2 edges, got {bins}")

    areas = []
    for pair in pairs:
        for obj in pair.objects:
            box = obj.box if side == "reference" else obj.query_box
            if box is None:
                raise ValueError(f"Pair {pair.pair_id} object {obj.index} has no query box")
            areas.append(box.area)

    series = pd.Series(areas, dtype=float)
    binned = pd.cut(series, bins=list(edges), right=False)
    counts = binned.value_counts(sort=False).tolist()

    return SizeHistogram(
        edges=edges,
        counts=[int(c) for c in counts],
        mean=float(series.mean()),
        median=float(series.median()),
        n_boxes=len(areas),
    )


def to_single_object(pairs: list[AnnotatedPair]) -> list[AnnotatedPair]:
    """
    Expand multi-object pairs into one pair per object (id "<pair_id>_o<j>").
    """
    singles = []
    for pair in pairs:
        for obj in pair.objects:
            singles.append(
                AnnotatedPair(
                    pair_id=f"{pair.pair_id}_o{obj.index}",
                    query_image=pair.query_image,
                    reference_image=pair.reference_image,
                    objects=[replace(obj, index=0)],
                    alignment=pair.alignment,
                )
            )
    return singles


def _fmt_box(box: BBox) -> str:
    return f"{box.cx:.4f} {box.cy:.4f} {box.w:.4f} {box.h:.4f}"


def _check_fractions(fractions: tuple[float, ...]) -> None:
    if len(fractions) != 3:
        raise ValueError(f"Expected three split fractions, got {fractions}")
    if any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError(f"Split fractions must be non-negative and sum to 1, got {fractions}")


def _parse_manifest(
    path: Path, lines: list[str]
) -> tuple[list[tuple[str, str]], tuple[float, float, float]]:
    if not lines or lines[0].strip() != MANIFEST_HEADER:
        raise DatasetFormatError(f"{path}:1: expected header {MANIFEST_HEADER!r}")

    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    entries: list[tuple[str, str]] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        tokens = raw.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        if tokens[0] == "fractions" and len(tokens) == 4:
            fractions = tuple(_to_float(path, lineno, t) for t in tokens[1:])  # type: ignore[assignment]
        elif tokens[0] == "pair" and len(tokens) == 3 and tokens[2] in SPLIT_NAMES:
            entries.append((tokens[1], tokens[2]))
        else:
            raise DatasetFormatError(f"{path}:{lineno}: malformed manifest line {raw!r}")

    if not entries:
        raise DatasetFormatError(f"{path}: manifest lists no pairs")
    return entries, fractions


def _read_pair(root: Path, pair_id: str) -> AnnotatedPair:
    path = root / "annotations" / f"{pair_id}.txt"
    if not path.exists():
        raise FileNotFoundError(f"Missing annotation file {path}")
    lines = path.read_text(encoding="utf-8").splitlines()

    fields: dict[str, object] = {}
    object_fields: list[tuple[int, dict]] = []
    transform_fields: dict | None = None
    retained: tuple[int, ...] = ()
    remapped: list[tuple[float, ...]] = []

    for lineno, raw in enumerate(lines, start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if lineno == 1:
            if len(tokens) != 1:
                raise DatasetFormatError(f"{path}:1: expected a bare pair_id, got {raw!r}")
            fields["pair_id"] = tokens[0]
            continue

        key = tokens[0]
        if key in ("query", "reference"):
            if len(tokens) != 4:
                raise DatasetFormatError(f"{path}:{lineno}: expected '{key} <path> <W> <H>'")
            fields[key] = (tokens[1], _to_int(path, lineno, tokens[2]), _to_int(path, lineno, tokens[3]))
        elif key == "alignment":
            if len(tokens) != 2 or tokens[1] not in ("V1", "V2"):
                raise DatasetFormatError(f"{path}:{lineno}: alignment must be V1 or V2")
            fields["alignment"] = tokens[1]
        elif key == "obj":
            object_fields.append((lineno, _parse_object(path, lineno, tokens)))
        elif key == "transform":
            transform_fields = _parse_transform(path, lineno, tokens)
        elif key == "retained":
            retained = tuple(_to_int(path, lineno, t) for t in tokens[1:])
        elif key == "remapped":
            if len(tokens) != 5:
                raise DatasetFormatError(f"{path}:{lineno}: expected 'remapped cx cy w h'")
            remapped.append(tuple(_to_float(path, lineno, t) for t in tokens[1:]))
        else:
            raise DatasetFormatError(f"{path}:{lineno}: unknown record {key!r}")

    for required in ("pair_id", "query", "reference", "alignment"):
        if required not in fields:
            raise DatasetFormatError(f"{path}:{len(lines)}: missing {required!r} record")
    if fields["pair_id"] != pair_id:
        raise DatasetFormatError(f"{path}:1: pair_id {fields['pair_id']!r} != {pair_id!r}")

    query_image = _load_image(root, path, fields["query"])
    reference_image = _load_image(root, path, fields["reference"])
    r_w, r_h = fields["reference"][1:]  # type: ignore[index]

    try:
        objects = []
        for _, obj in object_fields:
            box = _loaded_box(obj["box"], r_w, r_h)
            objects.append(
                ObjectAnnotation(
                    index=obj["index"],
                    click=ClickPoint(*obj["click"]),
                    box=box,
                    query_box=BBox(*obj["qbox"]) if obj.get("qbox") else None,
                    identity=obj.get("id", -1),
                )
            )
        transform = None
        if transform_fields is not None:
            transform = TransformRecord(
                **transform_fields,
                retained=retained,
                remapped=tuple(BBox(*values) for values in remapped),
            )
        return AnnotatedPair(
            pair_id=pair_id,
            query_image=query_image,
            reference_image=reference_image,
            objects=objects,
            alignment=fields["alignment"],  # type: ignore[arg-type]
            transform=transform,
        )
    except ValueError as e:
        raise AnnotationInvariantError(f"Pair {pair_id}: {e}") from e


def _loaded_box(values: tuple[float, ...], width: int, height: int) -> BBox:
    box = BBox(*values)
    if box.within(width, height, tol=_CONTAINMENT_TOLERANCE):
        return box.clip(width, height)
    return box


def _parse_object(path: Path, lineno: int, tokens: list[str]) -> dict:
    fields: dict = {}
    try:
        fields["index"] = int(tokens[1])
        i = 2
        while i < len(tokens):
            key = tokens[i]
            if key == "click":
                fields["click"] = (float(tokens[i + 1]), float(tokens[i + 2]))
                i += 3
            elif key in ("box", "qbox"):
                fields[key] = tuple(float(t) for t in tokens[i + 1 : i + 5])
                if len(fields[key]) != 4:
                    raise IndexError(key)
                i += 5
            elif key == "id":
                fields["id"] = int(tokens[i + 1])
                i += 2
            else:
                raise DatasetFormatError(f"{path}:{lineno}: unknown object field {key!r}")
    except (IndexError, ValueError) as e:
        if isinstance(e, DatasetFormatError):
            raise
        raise DatasetFormatError(f"{path}:{lineno}: malformed obj record ({e})") from e

    if "click" not in fields or "box" not in fields:
        raise DatasetFormatError(f"{path}:{lineno}: obj record needs click and box")
    return fields


def _parse_transform(path: Path, lineno: int, tokens: list[str]) -> dict:
    layout = ("flip", "scale", "crop", "window", "output", "affine")
    widths = {"flip": 1, "scale": 1, "crop": 1, "window": 4, "output": 2, "affine": 4}
    values: dict[str, list[str]] = {}
    i = 1
    for key in layout:
        if i >= len(tokens) or tokens[i] != key:
            raise DatasetFormatError(f"{path}:{lineno}: transform record expects {key!r}")
        values[key] = tokens[i + 1 : i + 1 + widths[key]]
        if len(values[key]) != widths[key]:
            raise DatasetFormatError(f"{path}:{lineno}: transform field {key!r} truncated")
        i += 1 + widths[key]

    affine = [_to_float(path, lineno, t) for t in values["affine"]]
    return {
        "flip": values["flip"][0] == "1",
        "scale": _to_float(path, lineno, values["scale"][0]),
        "crop": _to_float(path, lineno, values["crop"][0]),
        "window": tuple(_to_float(path, lineno, t) for t in values["window"]),
        "output_size": tuple(_to_int(path, lineno, t) for t in values["output"]),
        "a_x": affine[0],
        "b_x": affine[1],
        "a_y": affine[2],
        "b_y": affine[3],
    }


def _load_image(root: Path, annotation: Path, entry) -> np.ndarray:
    rel, width, height = entry
    image_path = root / rel
    if not image_path.exists():
        raise FileNotFoundError(f"{annotation}: image {image_path} not found")
    with Image.open(image_path) as img:
        array = np.asarray(img.convert("RGB"), dtype=np.uint8).copy()
    if array.shape[:2] != (height, width):
        raise DatasetFormatError(
            f"{annotation}: {rel} is {array.shape[1]}x{array.shape[0]}, declared {width}x{height}"
        )
    return array


def _to_float(path: Path, lineno: int, token: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise DatasetFormatError(f"{path}:{lineno}: expected a number, got {token!r}") from None


def _to_int(path: Path, lineno: int, token: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise DatasetFormatError(f"{path}:{lineno}: expected an integer, got {token!r}") from None
