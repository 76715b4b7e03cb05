import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from threshseg.field import (Grid, ImageField, Partition, integrate, partition_from_labels,
                             symmetric_difference_measure)


def test_grid_defaults_to_two_pi_square_pixels():
    g = Grid(64, 32)
    assert g.lx == pytest.approx(2 * math.pi)
    assert g.ly == pytest.approx(math.pi)
    assert g.hx == pytest.approx(g.hy)
    assert g.area == pytest.approx(2 * math.pi ** 2)


@pytest.mark.parametrize("nx,ny", [(1, 4), (4, 1), (0, 0)])
def test_grid_rejects_degenerate(nx, ny):
    with pytest.raises(ValueError):
        Grid(nx, ny)


def test_integrate_constant_one():
    g = Grid(37, 37)
    assert integrate(np.ones(g.shape), g) == pytest.approx(4 * math.pi ** 2, rel=1e-12)


def test_integrate_zero():
    g = Grid(8, 8)
    assert integrate(np.zeros(g.shape), g) == 0.0


def test_integrate_left_half():
    g = Grid(64, 64)
    u = np.zeros(g.shape)
    u[:, :32] = 1
    assert integrate(u, g) == pytest.approx(2 * math.pi ** 2, rel=1e-12)


def test_image_field_accepts_gray_and_rejects_nan():
    f = ImageField.from_array(np.zeros((4, 5)))
    assert f.values.shape == (4, 5, 1) and f.d == 1
    with pytest.raises(ValueError):
        ImageField.from_array(np.full((4, 4), np.nan))


def test_partition_from_all_zero_labels():
    u = partition_from_labels(np.zeros((4, 4), dtype=int), 2)
    np.testing.assert_array_equal(u.indicator(0), 1)
    np.testing.assert_array_equal(u.indicator(1), 0)


def test_partition_from_checkerboard():
    lab = np.indices((6, 6)).sum(axis=0) % 2
    u = partition_from_labels(lab, 2)
    np.testing.assert_array_equal(u.indicator(0) + u.indicator(1), 1)
    np.testing.assert_array_equal(u.indicator(1), lab)


def test_partition_label_out_of_range():
    lab = np.zeros((4, 4), dtype=int)
    lab[0, 0] = 3
    with pytest.raises(ValueError):
        partition_from_labels(lab, 2)


def test_symmetric_difference_identical():
    u = partition_from_labels(np.zeros((4, 4), dtype=int), 2)
    assert symmetric_difference_measure(u, u) == 0.0


def test_symmetric_difference_half_domain():
    a = partition_from_labels(np.zeros((8, 8), dtype=int), 2)
    lab = np.zeros((8, 8), dtype=int)
    lab[:, 4:] = 1
    b = partition_from_labels(lab, 2)
    # brute force: (1/|Omega|) * sum_x cell * sum_i |a_i - b_i|^2
    g = a.grid
    brute = sum(integrate((a.indicator(i) - b.indicator(i)) ** 2, g) for i in range(2)) / g.area
    assert brute == pytest.approx(1.0)
    assert symmetric_difference_measure(a, b) == pytest.approx(brute, abs=1e-15)


def test_symmetric_difference_phase_mismatch():
    a = partition_from_labels(np.zeros((4, 4), dtype=int), 2)
    b = partition_from_labels(np.zeros((4, 4), dtype=int), 3)
    with pytest.raises(ValueError):
        symmetric_difference_measure(a, b)


label_maps = st.integers(2, 4).flatmap(
    lambda n: st.tuples(st.just(n), arrays(np.int64, (6, 7), elements=st.integers(0, n - 1)),
                        arrays(np.int64, (6, 7), elements=st.integers(0, n - 1))))


@settings(max_examples=60, deadline=None)
@given(label_maps)
def test_partition_invariants_and_measure(case):
    n, la, lb = case
    a, b = partition_from_labels(la, n), partition_from_labels(lb, n)
    ind = a.indicators
    assert set(np.unique(ind)) <= {0.0, 1.0}
    np.testing.assert_array_equal(ind.sum(axis=0), 1.0)
    d = symmetric_difference_measure(a, b)
    assert 0.0 <= d <= 2.0
    assert d == symmetric_difference_measure(b, a)
    assert (d == 0.0) == np.array_equal(la, lb)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(-10, 10)),
       arrays(np.float64, (5, 5), elements=st.floats(0, 10)),
       st.floats(-3, 3))
def test_integrate_linear_and_monotone(a, b, c):
    g = Grid(5, 5)
    assert integrate(a + c * b, g) == pytest.approx(integrate(a, g) + c * integrate(b, g),
                                                    abs=1e-9)
    assert integrate(a + b, g) >= integrate(a, g) - 1e-12
