import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def texture():
    from cmfd.imgio import textured_image

    return textured_image(256, seed=7)


def square_image(size=256, side=64, lo=0.0, hi=255.0):
    img = np.full((size, size), lo)
    a = (size - side) // 2
    img[a : a + side, a : a + side] = hi
    return img
