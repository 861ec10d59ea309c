"""
Synthetic cross-view scenes.

A reference image is a top-down canvas with textured rectangles on a noisy
background. The query image is a deterministic "ground-view" rendering of
the same objects: horizontal position from the bearing to the image center,
vertical squash, nearer objects lower and larger, and a different palette.
Every object is therefore recoverable from either view, which gives a
closed-loop ground truth for localization.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from matplotlib.colors import hsv_to_rgb
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from data.geometry import BBox, ClickPoint, box_iou, sample_click_point
from data.pairs import AnnotatedPair, ObjectAnnotation

logger = logging.getLogger(__name__)


class PlacementError(RuntimeError):
    """Objects could not be placed under the overlap limit."""


class _Overlap(Exception):
    """One placement attempt collided with an already placed box."""


class _Hidden(Exception):
    """An object has no visible pixel left for its click."""


@dataclass
class SceneConfig:
    """
    Geometry of a synthetic scene.

    Attributes:
        reference_size: Reference (width, height) in pixels
        query_size: Query (width, height) in pixels
        min_object_size: Smallest object side in reference pixels
        max_object_size: Largest object side in reference pixels
        noise_level: Std of the Gaussian background noise (0-255 scale)
        overlap_limit: Max IoU between two placed reference boxes
        max_placement_attempts: Attempts per object before giving up
        squash: Vertical squash of objects in the query view
        stride: Image sizes must be multiples of this
        distinct_click_cells: Keep clicks of one pair in distinct stride cells
        max_click_attempts: Rejection draws per click before the scene is redrawn

    Example:
        >>> scene = SceneConfig(reference_size=(128, 128), query_size=(128, 64))
    """

    reference_size: tuple[int, int] = (256, 256)
    query_size: tuple[int, int] = (256, 128)
    min_object_size: int = 16
    max_object_size: int = 48
    noise_level: float = 12.0
    overlap_limit: float = 0.1
    max_placement_attempts: int = 100
    squash: float = 0.5
    stride: int = 16
    distinct_click_cells: bool = True
    max_click_attempts: int = 200

    def __post_init__(self):
        """Validate scene geometry."""
        for name in ("reference_size", "query_size"):
            width, height = getattr(self, name)
            if width % self.stride or height % self.stride:
                raise ValueError(f"{name} {width}x{height} not divisible by stride {self.stride}")
        if not 2 <= self.min_object_size <= self.max_object_size:
            raise ValueError(
                f"Object size range invalid: [{self.min_object_size}, {self.max_object_size}]"
            )
        if self.max_object_size > min(self.reference_size):
            raise ValueError("max_object_size exceeds the reference image")
        if not 0.0 <= self.overlap_limit <= 1.0:
            raise ValueError(f"overlap_limit must be in [0, 1], got {self.overlap_limit}")
        if self.max_placement_attempts < 1:
            raise ValueError("max_placement_attempts must be >= 1")
        if self.max_click_attempts < 1:
            raise ValueError("max_click_attempts must be >= 1")
        if self.noise_level < 0:
            raise ValueError(f"noise_level must be >= 0, got {self.noise_level}")


# Named geometries for the CLI; "desk" is the small scene of the short runs
SCENE_PRESETS: dict[str, SceneConfig] = {
    "default": SceneConfig(),
    "desk": SceneConfig(
        reference_size=(128, 128), query_size=(128, 64), min_object_size=16, max_object_size=32
    ),
}


def generate_pair(
    seed: int, num_objects: int, scene: SceneConfig | None = None, pair_id: str | None = None
) -> AnnotatedPair:
    """
    Generate one V1 (center- and north-aligned) pair.

    Clicks land on a pixel where the object itself is visible in the query
    view, never on a nearer object occluding it. With
    `scene.distinct_click_cells` the clicks of one pair also fall in
    distinct stride cells, so no two objects share a query feature. A scene
    where some object cannot get such a click is redrawn.

    Args:
        seed: Random seed; the output is a pure function of (seed, num_objects, scene)
        num_objects: Number of objects (>= 1)
        scene: Scene geometry (defaults to SceneConfig())
        pair_id: Identifier (defaults to "s<seed>")

    Returns:
        AnnotatedPair tagged V1

    Raises:
        ValueError: If num_objects < 1
        PlacementError: If the objects cannot be placed under the overlap limit,
            or no redrawn scene leaves every object clickable

    Example:
        >>> pair = generate_pair(seed=7, num_objects=3)
        >>> pair.num_objects
        3
    """
    if num_objects < 1:
        raise ValueError(f"num_objects must be >= 1, got {num_objects}")
    scene = scene or SceneConfig()
    rng = np.random.default_rng(seed)

    try:
        for attempt in Retrying(
            stop=stop_after_attempt(scene.max_placement_attempts),
            retry=retry_if_exception_type(_Hidden),
            reraise=True,
        ):
            with attempt:
                reference, query, objects = _draw_scene(rng, num_objects, scene)
    except _Hidden as err:
        raise PlacementError(
            f"No clickable layout for {num_objects} objects after "
            f"{scene.max_placement_attempts} scenes: {err}"
        ) from None

    return AnnotatedPair(
        pair_id=pair_id or f"s{seed}",
        query_image=query,
        reference_image=reference,
        objects=objects,
        alignment="V1",
    )


def generate_dataset(
    seed: int,
    n_pairs: int,
    objects_range: tuple[int, int] = (1, 8),
    scene: SceneConfig | None = None,
    v2: bool = False,
    transform=None,
) -> list[AnnotatedPair]:
    """
    Generate a list of pairs from one master seed.

    Per-pair seeds are spawned with numpy's SeedSequence, so pairs are
    independent and may be produced in any order or in parallel.

    Args:
        seed: Master seed
        n_pairs: Number of pairs
        objects_range: Inclusive (min, max) objects per pair
        scene: Scene geometry
        v2: Apply the crop/flip/scale transform to every pair
        transform: TransformConfig for V2 (defaults when None)

    Returns:
        List of pairs with ids "00000", "00001", ...
    """
    from data.transforms import TransformConfig, transform_to_v2

    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    low, high = objects_range
    if not 1 <= low <= high:
        raise ValueError(f"objects_range invalid: {objects_range}")

    scene = scene or SceneConfig()
    transform = transform or TransformConfig()
    children = np.random.SeedSequence(seed).spawn(n_pairs)

    pairs = []
    for i, child in enumerate(children):
        pair_seed, v2_seed = (int(s) for s in child.generate_state(2))
        count_rng = np.random.default_rng(pair_seed ^ 0x5EED)
        num_objects = int(count_rng.integers(low, high + 1))
        pair = generate_pair(pair_seed, num_objects, scene, pair_id=f"{i:05d}")
        if v2:
            pair = transform_to_v2(pair, np.random.default_rng(v2_seed), transform)
        pairs.append(pair)

    logger.info(f"Generated {len(pairs)} {'V2' if v2 else 'V1'} pairs (seed={seed})")
    return pairs


def draw_order(boxes: list[BBox], scene: SceneConfig) -> np.ndarray:
    """Object indices in query drawing order: farthest first, nearest last."""
    ref_w, ref_h = scene.reference_size
    closeness = [_closeness(box, ref_w, ref_h) for box in boxes]
    return np.argsort([-c for c in closeness], kind="stable")[::-1]


def visibility_map(
    query_boxes: list[BBox], order: np.ndarray, query_size: tuple[int, int]
) -> np.ndarray:
    """
    Label each query pixel with the object drawn last over it.

    Args:
        query_boxes: Query-side boxes (integer corners)
        order: Drawing order from draw_order
        query_size: Query (width, height)

    Returns:
        int array (H, W); -1 for background, else the object index
    """
    q_w, q_h = query_size
    labels = np.full((q_h, q_w), -1, dtype=np.int64)
    for k in order:
        x1, y1, x2, y2 = (int(round(v)) for v in query_boxes[k].xyxy)
        labels[y1:y2, x1:x2] = k
    return labels


def _draw_scene(
    rng: np.random.Generator, num_objects: int, scene: SceneConfig
) -> tuple[np.ndarray, np.ndarray, list[ObjectAnnotation]]:
    ref_w, ref_h = scene.reference_size
    reference = _noisy_canvas(rng, ref_h, ref_w, base=(112, 108, 96), noise=scene.noise_level)

    boxes = _place_boxes(rng, num_objects, scene)

    # Distinct hues within the scene, random offset across scenes
    hue_offset = rng.uniform(0.0, 1.0)
    hues = [(hue_offset + k / num_objects + rng.uniform(-0.1, 0.1) / num_objects) % 1.0
            for k in range(num_objects)]
    periods = rng.integers(3, 8, size=num_objects)

    for k, box in enumerate(boxes):
        color = _hue_color(hues[k], saturation=0.8, value=0.9)
        _draw_striped_box(reference, box, color, int(periods[k]), horizontal=True)

    query, query_boxes, labels = _render_ground_view(rng, boxes, hues, periods, scene)

    taken: set[tuple[int, int]] = set()
    objects = []
    for k, (box, query_box) in enumerate(zip(boxes, query_boxes)):
        click = _visible_click(rng, k, query_box, labels, taken, scene)
        taken.add(_cell_of(click.x, click.y, scene.stride))
        objects.append(
            ObjectAnnotation(index=k, click=click, box=box, query_box=query_box, identity=k)
        )
    return reference, query, objects


def _visible_click(
    rng: np.random.Generator,
    k: int,
    query_box: BBox,
    labels: np.ndarray,
    taken: set[tuple[int, int]],
    scene: SceneConfig,
) -> ClickPoint:
    """Rejection-sample a click on a visible pixel of object k."""
    for _ in range(scene.max_click_attempts):
        click = sample_click_point(query_box, rng)
        if labels[int(click.y), int(click.x)] != k:
            continue
        if scene.distinct_click_cells and _cell_of(click.x, click.y, scene.stride) in taken:
            continue
        return click
    raise _Hidden(f"object {k} has no free visible pixel")


def _cell_of(x: float, y: float, stride: int) -> tuple[int, int]:
    return int(y // stride), int(x // stride)


def _closeness(box: BBox, ref_w: int, ref_h: int) -> float:
    """1 at the reference center, 0 at its corners."""
    max_dist = math.hypot(ref_w / 2.0, ref_h / 2.0)
    return 1.0 - math.hypot(box.cx - ref_w / 2.0, box.cy - ref_h / 2.0) / max_dist


def _place_boxes(rng: np.random.Generator, num_objects: int, scene: SceneConfig) -> list[BBox]:
    """Rejection-sample integer boxes with pairwise IoU <= overlap_limit."""
    ref_w, ref_h = scene.reference_size
    placed: list[BBox] = []

    for k in range(num_objects):
        try:
            for attempt in Retrying(
                stop=stop_after_attempt(scene.max_placement_attempts),
                retry=retry_if_exception_type(_Overlap),
                reraise=True,
            ):
                with attempt:
                    w = int(rng.integers(scene.min_object_size, scene.max_object_size + 1))
                    h = int(rng.integers(scene.min_object_size, scene.max_object_size + 1))
                    x1 = int(rng.integers(0, ref_w - w + 1))
                    y1 = int(rng.integers(0, ref_h - h + 1))
                    candidate = BBox.from_xyxy(x1, y1, x1 + w, y1 + h)
                    if any(box_iou(candidate, other) > scene.overlap_limit for other in placed):
                        raise _Overlap()
        except _Overlap:
            raise PlacementError(
                f"Could not place object {k + 1}/{num_objects} within overlap limit "
                f"{scene.overlap_limit} after {scene.max_placement_attempts} attempts"
            ) from None
        placed.append(candidate)

    return placed


def _render_ground_view(
    rng: np.random.Generator,
    boxes: list[BBox],
    hues: list[float],
    periods: np.ndarray,
    scene: SceneConfig,
) -> tuple[np.ndarray, list[BBox], np.ndarray]:
    """Draw the query view; return it with the query-side boxes and the visibility map."""
    ref_w, ref_h = scene.reference_size
    q_w, q_h = scene.query_size
    horizon = 0.45 * q_h

    query = _noisy_canvas(rng, q_h, q_w, base=(150, 170, 200), noise=scene.noise_level)
    ground = _noisy_canvas(rng, q_h, q_w, base=(90, 110, 70), noise=scene.noise_level)
    query[int(horizon):] = ground[int(horizon):]

    query_boxes = []
    for box in boxes:
        dx = box.cx - ref_w / 2.0
        dy = box.cy - ref_h / 2.0
        bearing = math.atan2(dx, -dy)  # 0 = north (up)
        closeness = _closeness(box, ref_w, ref_h)

        size_factor = 0.6 + 0.6 * closeness
        width = max(4.0, box.w * (q_w / ref_w) * size_factor)
        height = max(4.0, box.h * scene.squash * size_factor)
        x_center = (bearing / (2 * math.pi) + 0.5) * q_w
        bottom = horizon + closeness * (q_h - horizon) * 0.8 + 2.0

        x1 = int(round(max(0.0, x_center - width / 2.0)))
        x2 = int(round(min(float(q_w), x_center + width / 2.0)))
        y1 = int(round(max(0.0, bottom - height)))
        y2 = int(round(min(float(q_h), bottom)))
        # Keep at least a 2 px interior for the click
        if x2 - x1 < 2:
            x1, x2 = (x2 - 2, x2) if x2 >= 2 else (0, 2)
        if y2 - y1 < 2:
            y1, y2 = (y2 - 2, y2) if y2 >= 2 else (0, 2)

        query_boxes.append(BBox.from_xyxy(x1, y1, x2, y2))

    # Far objects first so nearer ones occlude them
    order = draw_order(boxes, scene)
    for k in order:
        color = _hue_color(hues[k], saturation=0.7, value=0.95)
        color = (color[1], color[2], color[0])  # query palette: rotated channels
        _draw_striped_box(query, query_boxes[k], color, int(periods[k]), horizontal=False)

    return query, query_boxes, visibility_map(query_boxes, order, scene.query_size)


def _noisy_canvas(
    rng: np.random.Generator, height: int, width: int, base: tuple[int, int, int], noise: float
) -> np.ndarray:
    canvas = np.asarray(base, dtype=np.float64)[None, None, :] + rng.normal(
        0.0, noise, size=(height, width, 3)
    )
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


def _hue_color(hue: float, saturation: float, value: float) -> tuple[int, int, int]:
    rgb = hsv_to_rgb([hue, saturation, value]) * 255.0
    return int(round(rgb[0])), int(round(rgb[1])), int(round(rgb[2]))


def _draw_striped_box(
    image: np.ndarray, box: BBox, color: tuple[int, int, int], period: int, horizontal: bool
) -> None:
    """Fill a box with a two-tone stripe texture, in place."""
    x1, y1, x2, y2 = (int(round(v)) for v in box.xyxy)
    patch = np.empty((y2 - y1, x2 - x1, 3), dtype=np.float64)
    patch[:] = color
    coords = np.arange(y2 - y1) if horizontal else np.arange(x2 - x1)
    dark = (coords // period) % 2 == 1
    if horizontal:
        patch[dark, :, :] *= 0.65
    else:
        patch[:, dark, :] *= 0.65
    image[y1:y2, x1:x2] = np.clip(np.rint(patch), 0, 255).astype(np.uint8)
