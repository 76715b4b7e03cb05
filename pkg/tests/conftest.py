import numpy as np
import pytest

from threshseg.field import Grid, ImageField, Partition


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(rng, size, n, d=1):
    """Random image plus random partition on a square grid."""
    grid = Grid(size, size)
    f = ImageField(grid, rng.random((size, size, d)))
    u = Partition(grid, n, rng.integers(0, n, size=(size, size)))
    return f, u


def assert_binary_partition(u):
    ind = u.indicators
    assert set(np.unique(ind)) <= {0.0, 1.0}
    np.testing.assert_array_equal(ind.sum(axis=0), 1.0)
