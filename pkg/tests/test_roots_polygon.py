import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctdispatch import polygon as poly
from ctdispatch.roots import crossings, first_exceedance


def test_first_exceedance_polynomial_root():
    f = lambda t: (t - 3.25) * (t + 1.0)
    t = first_exceedance(f, 0.0, 10.0)
    assert t == pytest.approx(3.25, abs=1e-9)


def test_first_exceedance_none_and_immediate():
    assert first_exceedance(lambda t: -1.0 - t, 0.0, 5.0) is None
    assert first_exceedance(lambda t: 1.0 + 0 * t, 0.0, 5.0) == 0.0


def test_crossings_directions():
    f = lambda t: np.sin(t)
    out = crossings(f, 0.5, 10.0, step=0.01)
    np.testing.assert_allclose([r for r, _ in out], [np.pi, 2 * np.pi, 3 * np.pi], atol=1e-8)
    assert [d for _, d in out] == [-1, 1, -1]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.05, 9.95), min_size=1, max_size=4, unique=True))
def test_first_exceedance_matches_dense_scan(roots):
    roots = sorted(roots)
    # make the simple roots at least one grid step apart
    if any(b - a < 0.05 for a, b in zip(roots, roots[1:])):
        return
    f = lambda t: -np.prod([np.asarray(t) - r for r in roots], axis=0)
    t = first_exceedance(f, 0.0, 10.0)
    grid = np.linspace(0.0, 10.0, 1_000_001)
    above = np.flatnonzero(f(grid) > 0)
    expected = None if above.size == 0 else grid[above[0]]
    if expected is None:
        assert t is None
    else:
        assert t == pytest.approx(expected, abs=2e-5)


def test_polygon_of_triangle():
    H = np.array([[-1.0, 0.0, -0.2], [0.0, -1.0, -0.2], [1.0, 1.0, 1.0]])
    verts = poly.polygon(H)
    assert poly.area(verts) == pytest.approx(0.5 * 0.6 * 0.6)
    keep = poly.supporting_rows(H, verts)
    assert keep == [0, 1, 2]


def test_redundant_rows_are_dropped():
    H = np.array([[1.0, 0.0, 0.5], [1.0, 0.0, 0.8], [0.0, 1.0, 2.0]])
    verts = poly.polygon(H)
    assert poly.supporting_rows(H, verts) == [0]


def test_merge_duplicates_keeps_tightest():
    H = np.array([[1.0, 0.0, 0.5], [1.0, 0.0, 0.4], [0.0, 1.0, 0.3]])
    assert poly.merge_duplicates(H) == [1, 2]


def test_segment_coverage():
    H = np.array([[1.0, 0.0, 0.5]])
    lo, hi = poly.segment_coverage(H, np.array([0.0, 0.5]), np.array([1.0, 0.5]), tol=0.0)
    assert (lo, hi) == (0.0, pytest.approx(0.5))
    assert poly.segment_coverage(H, np.array([0.6, 0.0]), np.array([0.9, 0.0])) is None
