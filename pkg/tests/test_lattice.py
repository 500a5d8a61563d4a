from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from orthofield.errors import LatticeRangeError, ParameterError, StructuralError
from orthofield.lattice import (Rect, block_rect, build_prefix_table, increment, leq, meet, rect_sum, scaled_path)


def naive(values, r: Rect, origin=(0, 0)):
    sl = tuple(slice(a - o, b - o) for a, b, o in zip(r.lo, r.hi, origin))
    return values[sl].sum()


def test_rect_basics():
    r = Rect((1, 2), (4, 3))
    assert r.shape == (3, 1) and r.volume == 3 and r.dim == 2
    assert Rect((0, 0), (0, 5)).empty
    assert r.contains_point((3, 2)) and not r.contains_point((4, 2))
    assert Rect((0, 0), (5, 5)).contains(r)
    assert r.shifted((1, -1)) == Rect((2, 1), (5, 2))
    assert list(Rect((0, 0), (2, 1)).points()) == [(0, 0), (1, 0)]
    with pytest.raises(StructuralError):
        Rect((0, 0), (1,))


def test_order_helpers():
    assert leq((0, 1), (0, 2)) and not leq((1, 0), (0, 5))
    assert meet((0, 3), (2, -1)) == (0, -1)


def test_zero_and_ones_tables():
    t = build_prefix_table(np.zeros((4, 4)))
    assert not t.cumulative.any()
    t = build_prefix_table(np.ones((3, 4)))
    assert t.cumulative[3, 4] == 12
    assert rect_sum(t, Rect((0, 1), (2, 4))) == 6


def test_random_5x5_every_rect():
    rng = np.random.default_rng(0)
    v = rng.integers(-9, 10, size=(5, 5))
    t = build_prefix_table(v)
    for a in range(6):
        for b in range(a, 6):
            for c in range(6):
                for d in range(c, 6):
                    r = Rect((a, c), (b, d))
                    assert rect_sum(t, r) == naive(v, r)


def test_seven_by_seven_fixed_rect():
    v = np.random.default_rng(1).normal(size=(7, 7))
    t = build_prefix_table(v)
    assert rect_sum(t, Rect((2, 1), (5, 6))) == pytest.approx(v[2:5, 1:6].sum(), abs=1e-12)


def test_empty_rect_is_zero():
    t = build_prefix_table(np.ones((3, 3)))
    assert rect_sum(t, Rect((1, 1), (1, 3))) == 0


def test_rect_outside_window():
    t = build_prefix_table(np.ones((3, 3)))
    with pytest.raises(LatticeRangeError):
        rect_sum(t, Rect((0, 0), (4, 1)))


def test_shape_mismatch():
    with pytest.raises(StructuralError):
        build_prefix_table(np.ones((3, 3)), Rect((0, 0), (2, 3)))
    with pytest.raises(StructuralError):
        build_prefix_table(np.ones((2, 2, 2, 2)))


@given(arrays(np.int64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.integers(-50, 50)),
       st.data())
def test_rect_sum_matches_naive(values, data):
    h, w = values.shape
    lo = (data.draw(st.integers(-3, 3)), data.draw(st.integers(-3, 3)))
    window = Rect(lo, (lo[0] + h, lo[1] + w))
    t = build_prefix_table(values, window)
    a = data.draw(st.integers(lo[0], lo[0] + h))
    b = data.draw(st.integers(a, lo[0] + h))
    c = data.draw(st.integers(lo[1], lo[1] + w))
    d = data.draw(st.integers(c, lo[1] + w))
    r = Rect((a, c), (b, d))
    assert rect_sum(t, r) == naive(values, r, lo)


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(-1, 1)))
def test_three_dimensional_total(values):
    t = build_prefix_table(values)
    full = Rect.from_shape(values.shape)
    assert rect_sum(t, full) == pytest.approx(values.sum(), abs=1e-9)


def test_batch_axes():
    v = np.random.default_rng(2).normal(size=(3, 4, 5))
    t = build_prefix_table(v, Rect.from_shape((4, 5)))
    np.testing.assert_allclose(rect_sum(t, Rect((1, 1), (3, 4))), v[:, 1:3, 1:4].sum(axis=(1, 2)))


def test_scaled_path_examples():
    v = np.random.default_rng(3).normal(size=(8, 8))
    t = build_prefix_table(v)
    g = scaled_path(t, (8, 8), [(0, 1), (1, 1), (Fraction(1, 2), Fraction(1, 2))])
    assert g.values[0] == 0
    assert g.values[1] == pytest.approx(v.sum() / 8)
    assert g.values[2] == pytest.approx(v[:4, :4].sum() / 8)


def test_scaled_path_rejects_outside_unit():
    t = build_prefix_table(np.ones((4, 4)))
    with pytest.raises(LatticeRangeError):
        scaled_path(t, (4, 4), [(1.5, 0)])
    with pytest.raises(ParameterError):
        scaled_path(t, (0, 4), [(1, 1)])


def test_increment_examples():
    n = v = 6
    t = build_prefix_table(np.ones((n, v)))
    assert increment(t, Rect((0, 0), (0, 3)), np.sqrt(n * v)) == 0
    assert increment(t, Rect((0, 0), (n, v)), np.sqrt(n * v)) == pytest.approx(np.sqrt(n * v))


@given(st.integers(1, 7), st.integers(0, 7), st.data())
def test_increment_additive(h, cut, data):
    x = np.random.default_rng(h).normal(size=(8, 8))
    t = build_prefix_table(x)
    cut = min(cut, h)
    a = Rect((0, 0), (h, 8))
    a1, a2 = Rect((0, 0), (cut, 8)), Rect((cut, 0), (h, 8))
    assert increment(t, a, 8.0) == pytest.approx(increment(t, a1, 8.0) + increment(t, a2, 8.0), abs=1e-12)


def test_block_rect_uses_exact_floors():
    # 0.3 * 10 is 3.0000000000000004 in floating point; as a rational it is exactly 3
    assert block_rect((10, 10), (Fraction(3, 10), 0), (1, Fraction(1, 2))) == Rect((3, 0), (10, 5))
