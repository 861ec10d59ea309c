"""Pytest configuration and shared fixtures."""

import sys
from pathlib import Path

import matplotlib
import pytest
import torch

# Add project root to path for imports
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

# Headless colour maps only
matplotlib.use("Agg")

# Scenes, tiny models, dataset directories and checkpoints
from tests.fixtures.scenes import *  # noqa: E402, F401, F403


@pytest.fixture(autouse=True, scope="session")
def single_thread_torch():
    """Run every test with one intra-op thread so repeated runs match bit for bit."""
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    yield
    torch.set_num_threads(threads)
