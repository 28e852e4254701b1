import numpy as np
import pytest

from dcpnet import ImageChip


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def const_chip(size: int, value: float) -> ImageChip:
    return ImageChip(np.full((size, size), value, dtype=np.float32))


def random_chip(rng: np.random.Generator, size: int) -> ImageChip:
    return ImageChip(rng.uniform(0.0, 1.0, size=(size, size)).astype(np.float32))
