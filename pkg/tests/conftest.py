"""Shared fixtures: small synthetic models and cameras sized for fast tests."""

import numpy as np
import pytest

from facekit import Camera, make_synthetic_model
from facekit.cli import default_camera


@pytest.fixture(scope="session")
def tiny_model():
    # 162-vertex icosphere head, small bases: fastest full-featured model.
    return make_synthetic_model(11, 162, 12, 8, 5)


@pytest.fixture(scope="session")
def small_model():
    return make_synthetic_model(5, 642, 24, 12, 6)


@pytest.fixture(scope="session")
def cam96() -> Camera:
    return default_camera(96, 96)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(202)
