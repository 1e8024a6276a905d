import numpy as np
import pytest

from hfsdiff.rng import RngStream


@pytest.fixture
def rng():
    return RngStream(1234)


def rand_field(shape, seed=0):
    g = np.random.default_rng(seed)
    return g.standard_normal(shape) + 1j * g.standard_normal(shape)


def rel(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(np.asarray(b))
