from __future__ import annotations

import numpy as np
import pytest
import torch

from collisionseg.config import soundboard_profile
from collisionseg.model import build_bundle
from collisionseg.soundboard import SoundboardConfig, generate_soundboard


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_cfg():
    return soundboard_profile()


@pytest.fixture(scope="session")
def tiny_bundle(tiny_cfg):
    return build_bundle(tiny_cfg)


@pytest.fixture(scope="session")
def small_soundboard(tmp_path_factory):
    """A small generated dataset shared by data/train/eval tests."""
    out = tmp_path_factory.mktemp("soundboard_small")
    cfg = SoundboardConfig(n_train=120, n_test=24, seed=7)
    generate_soundboard(cfg, out)
    return out


@pytest.fixture(autouse=True)
def _torch_determinism():
    torch.manual_seed(0)
    yield
