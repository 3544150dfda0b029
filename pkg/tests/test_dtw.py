import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trendseek.engines.dtw import dtw_distance


def brute_force_dtw(a, b):
    """Enumerate every monotone alignment path ending at (len(a)-1, len(b)-1)."""
    n, m = len(a), len(b)
    best = [float("inf")]

    def walk(i, j, cost):
        cost += abs(a[i] - b[j])
        if cost >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = cost
            return
        if i + 1 < n:
            walk(i + 1, j, cost)
        if j + 1 < m:
            walk(i, j + 1, cost)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, cost)

    walk(0, 0, 0.0)
    return best[0]


def test_identical_series_zero():
    assert dtw_distance([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0


def test_shifted_step_aligns_free():
    assert dtw_distance([0.0, 0.0, 1.0], [0.0, 1.0, 1.0]) == 0.0


def test_band_zero_is_pointwise_l1():
    a = [0.0, 2.0, 5.0, 1.0]
    b = [1.0, 2.0, 3.0, 3.0]
    expected = sum(abs(x - y) for x, y in zip(a, b))
    assert dtw_distance(a, b, band=0) == pytest.approx(expected, abs=1e-12)


def test_symmetry(rng):
    for _ in range(20):
        a = list(rng.normal(size=int(rng.integers(2, 10))))
        b = list(rng.normal(size=int(rng.integers(2, 10))))
        assert dtw_distance(a, b) == pytest.approx(dtw_distance(b, a), abs=1e-12)


def test_matches_brute_force_exhaustively(rng):
    """All path alignments for short series; the acceptance criterion scale."""
    for _ in range(80):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(1, 9))
        a = list(np.round(rng.normal(size=n), 3))
        b = list(np.round(rng.normal(size=m), 3))
        assert dtw_distance(a, b) == pytest.approx(brute_force_dtw(a, b), abs=0.0)


@given(
    st.lists(st.floats(-10, 10), min_size=1, max_size=7),
    st.lists(st.floats(-10, 10), min_size=1, max_size=7),
)
@settings(max_examples=150, deadline=None)
def test_property_matches_brute_force(a, b):
    assert dtw_distance(a, b) == pytest.approx(brute_force_dtw(a, b), abs=1e-9)


def test_band_narrower_than_length_gap_still_completes():
    assert dtw_distance([0.0, 1.0, 2.0, 3.0], [0.0], band=0) >= 0.0
