"""Synthetic scenes, tiny models and on-disk datasets for testing."""

import numpy as np
import pytest
import torch

from core.encoders import EncoderConfig
from core.model import ModelConfig, build_model
from data.dataset import split_pairs, write_dataset
from data.geometry import BBox, ClickPoint
from data.pairs import AnnotatedPair, ObjectAnnotation
from data.synthetic import SceneConfig, generate_dataset
from pipeline.config import TrainConfig
from pipeline.trainer import Trainer

SMALL_SCENE = SceneConfig(
    reference_size=(64, 64),
    query_size=(64, 32),
    min_object_size=8,
    max_object_size=20,
)


def make_pair(
    boxes: list[BBox],
    clicks: list[ClickPoint] | None = None,
    reference_size: tuple[int, int] = (64, 64),
    query_size: tuple[int, int] = (64, 32),
    pair_id: str = "p0",
) -> AnnotatedPair:
    """Pair with blank images and the given boxes (clicks default to (1, 1))."""
    clicks = clicks or [ClickPoint(1.0, 1.0)] * len(boxes)
    q_w, q_h = query_size
    r_w, r_h = reference_size
    return AnnotatedPair(
        pair_id=pair_id,
        query_image=np.zeros((q_h, q_w, 3), dtype=np.uint8),
        reference_image=np.zeros((r_h, r_w, 3), dtype=np.uint8),
        objects=[
            ObjectAnnotation(index=i, click=c, box=b, identity=i)
            for i, (c, b) in enumerate(zip(clicks, boxes))
        ],
    )


def tiny_encoder(activation: str = "relu") -> EncoderConfig:
    return EncoderConfig(
        stride=16,
        query_channels=(4, 4, 4, 8),
        reference_channels=(4, 4, 4, 8),
        embed_dim=8,
        activation=activation,
    )


def tiny_train_config(**overrides) -> TrainConfig:
    """Desk-scale config that trains in well under a second per step."""
    values = dict(
        learning_rate=1e-3,
        batch_size=2,
        epochs=2,
        seed=0,
        stride=16,
        query_channels=(4, 4, 4, 8),
        reference_channels=(4, 4, 4, 8),
        embed_dim=8,
        head_hidden=8,
        max_steps=2,
    )
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def small_scene():
    """64x64 reference / 64x32 query scene."""
    return SMALL_SCENE


@pytest.fixture
def small_pairs():
    """Six small V1 pairs with one to three objects."""
    return generate_dataset(seed=3, n_pairs=6, objects_range=(1, 3), scene=SMALL_SCENE)


@pytest.fixture
def small_v2_pairs():
    """Six small V2 pairs."""
    return generate_dataset(seed=3, n_pairs=6, objects_range=(1, 3), scene=SMALL_SCENE, v2=True)


@pytest.fixture
def tiny_model_config():
    return ModelConfig(encoder=tiny_encoder(), head_hidden=8, anchor=(14.0, 14.0), seed=0)


@pytest.fixture
def tiny_model(tiny_model_config):
    return build_model(tiny_model_config)


@pytest.fixture
def dataset_dir(tmp_path, small_pairs):
    """Small V1 dataset written to disk with a fixed split."""
    root = tmp_path / "dataset"
    split = split_pairs([p.pair_id for p in small_pairs], seed=0)
    write_dataset(small_pairs, split, root)
    return root


@pytest.fixture
def trained_checkpoint(tmp_path, small_pairs):
    """Checkpoint of a two-step run on the small pairs."""
    torch.manual_seed(0)
    result = Trainer(tiny_train_config()).fit(small_pairs, out_dir=tmp_path / "run")
    return result.checkpoint_path
