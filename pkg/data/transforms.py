"""
V1 -> V2 reference transform: random crop, horizontal flip and scale.

The reference image loses its center and north alignment with the query.
Boxes follow the exact same affine map as the image. Objects whose remapped
center leaves the crop are dropped; boxes whose center stays inside but
whose extent leaves the image are clipped.
"""

import logging
from dataclasses import dataclass

import numpy as np
from PIL import Image
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from data.pairs import AnnotatedPair, ObjectAnnotation, TransformRecord

logger = logging.getLogger(__name__)

CROP_BOUNDS = (0.6, 1.0)
SCALE_BOUNDS = (0.75, 1.33)
BACKGROUND_FILL = (112, 108, 96)


class TransformError(RuntimeError):
    """No sampled transform retained at least one object."""


class _NothingRetained(Exception):
    pass


@dataclass
class TransformConfig:
    """
    Sampling ranges of the V2 transform.

    Attributes:
        crop_range: (low, high) crop fraction, inside [0.6, 1.0]
        scale_range: (low, high) zoom factor, inside [0.75, 1.33]
        flip_probability: Probability of a horizontal flip
        max_attempts: Resampling attempts when a transform drops every object
    """

    crop_range: tuple[float, float] = CROP_BOUNDS
    scale_range: tuple[float, float] = SCALE_BOUNDS
    flip_probability: float = 0.5
    max_attempts: int = 20

    def __post_init__(self):
        """Validate sampling ranges."""
        _check_range("crop_range", self.crop_range, CROP_BOUNDS)
        _check_range("scale_range", self.scale_range, SCALE_BOUNDS)
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError(f"flip_probability must be in [0, 1], got {self.flip_probability}")
        if self.max_attempts < 1:
            raise ValueError(f"max_attempts must be >= 1, got {self.max_attempts}")


def transform_to_v2(
    pair: AnnotatedPair, rng: np.random.Generator, params: TransformConfig | None = None
) -> AnnotatedPair:
    """
    Crop, flip and rescale the reference image of a V1 pair.

    The crop window has side crop * size / scale and is resampled to the
    original reference size, so stride divisibility is preserved. The query
    side of every retained object is unchanged.

    Args:
        pair: V1 pair
        rng: Random state
        params: Sampling ranges

    Returns:
        V2 pair carrying the TransformRecord of the applied map

    Raises:
        ValueError: If the pair is not V1
        TransformError: If no transform retains an object after max_attempts

    Example:
        >>> v2 = transform_to_v2(pair, np.random.default_rng(0), TransformConfig())
        >>> v2.transform.invert_box(v2.transform.remapped[0])
    """
    if pair.alignment != "V1":
        raise ValueError(f"transform_to_v2 expects a V1 pair, got {pair.alignment}")
    params = params or TransformConfig()
    width, height = pair.reference_size

    try:
        for attempt in Retrying(
            stop=stop_after_attempt(params.max_attempts),
            retry=retry_if_exception_type(_NothingRetained),
            reraise=True,
        ):
            with attempt:
                record = _sample_record(pair, rng, params)
                if not record.retained:
                    raise _NothingRetained()
    except _NothingRetained:
        raise TransformError(
            f"No transform retained an object of {pair.pair_id} "
            f"after {params.max_attempts} attempts"
        ) from None

    objects = []
    for new_index, (source_index, remapped) in enumerate(zip(record.retained, record.remapped)):
        source = pair.objects[source_index]
        objects.append(
            ObjectAnnotation(
                index=new_index,
                click=source.click,
                box=remapped.clip(width, height),
                query_box=source.query_box,
                identity=source.identity,
            )
        )

    dropped = pair.num_objects - len(objects)
    if dropped:
        logger.debug(f"{pair.pair_id}: V2 crop dropped {dropped}/{pair.num_objects} objects")

    return AnnotatedPair(
        pair_id=pair.pair_id,
        query_image=pair.query_image.copy(),
        reference_image=_warp_image(pair.reference_image, record),
        objects=objects,
        alignment="V2",
        transform=record,
    )


def _sample_record(
    pair: AnnotatedPair, rng: np.random.Generator, params: TransformConfig
) -> TransformRecord:
    width, height = pair.reference_size

    crop = float(rng.uniform(*params.crop_range))
    scale = float(rng.uniform(*params.scale_range))
    flip = bool(rng.uniform() < params.flip_probability)

    window_w = crop * width / scale
    window_h = crop * height / scale
    # Smaller windows stay inside the image, larger ones contain it
    x0 = float(rng.uniform(min(0.0, width - window_w), max(0.0, width - window_w)))
    y0 = float(rng.uniform(min(0.0, height - window_h), max(0.0, height - window_h)))

    k_x = width / window_w
    k_y = height / window_h
    if flip:
        a_x, b_x = -k_x, (width - 1) + k_x * x0
    else:
        a_x, b_x = k_x, -k_x * x0
    a_y, b_y = k_y, -k_y * y0

    record = TransformRecord(
        flip=flip,
        scale=scale,
        crop=crop,
        window=(x0, y0, window_w, window_h),
        output_size=(width, height),
        a_x=a_x,
        b_x=b_x,
        a_y=a_y,
        b_y=b_y,
    )

    retained, remapped = [], []
    for i, obj in enumerate(pair.objects):
        box = record.apply_box(obj.box)
        if 0.0 <= box.cx < width and 0.0 <= box.cy < height:
            retained.append(i)
            remapped.append(box)

    return TransformRecord(
        **{**record.__dict__, "retained": tuple(retained), "remapped": tuple(remapped)}
    )


def _warp_image(image: np.ndarray, record: TransformRecord) -> np.ndarray:
    """Resample the image through the inverse of the record's affine map."""
    # PIL maps output coordinates to input coordinates
    data = (
        1.0 / record.a_x,
        0.0,
        -record.b_x / record.a_x,
        0.0,
        1.0 / record.a_y,
        -record.b_y / record.a_y,
    )
    warped = Image.fromarray(image).transform(
        record.output_size,
        Image.Transform.AFFINE,
        data,
        resample=Image.Resampling.BILINEAR,
        fillcolor=BACKGROUND_FILL,
    )
    return np.asarray(warped, dtype=np.uint8).copy()


def _check_range(name: str, value: tuple[float, float], bounds: tuple[float, float]) -> None:
    low, high = value
    if not bounds[0] <= low <= high <= bounds[1]:
        raise ValueError(f"{name} must satisfy {bounds[0]} <= low <= high <= {bounds[1]}, got {value}")
