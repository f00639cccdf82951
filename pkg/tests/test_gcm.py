import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from isoinfer.errors import InvalidInput, OutOfDomain
from isoinfer.gcm import (
    PolyLine,
    cusum_fitted,
    isotonic_via_cusum,
    left_slope,
    lower_hull,
    sl_gcm,
    sl_lcm,
)
from isoinfer.isotonic import SortedSample, evaluate, minmax_at, pava, sort_xy
from oracles import all_chords_hull

# frozen from tests/oracles.py: all_chords_hull([0, 1, 2], [0, 5, 1])
CHORD_HULL_VERTICES = [0, 2]


def random_line(rng, m, integer=False):
    ts = np.cumsum(rng.uniform(0.1, 2.0, m))
    vs = rng.integers(-5, 6, m).astype(float) if integer else rng.normal(size=m)
    return PolyLine.of(ts, vs)


lines = st.integers(2, 30).flatmap(
    lambda m: st.tuples(
        arrays(np.float64, m, elements=st.floats(0.01, 5.0)),
        arrays(np.float64, m, elements=st.floats(-100, 100)),
    )
).map(lambda tv: PolyLine.of(np.cumsum(tv[0]), tv[1]))


class TestLowerHull:
    def test_convex_input_is_own_hull(self):
        ts = np.linspace(-2, 2, 21)
        h = lower_hull(PolyLine.of(ts, ts**2))
        assert h.vertex_idx.tolist() == list(range(21))

    def test_chord_example(self):
        line = PolyLine.of([0, 1, 2], [0, 5, 1])
        h = lower_hull(line)
        assert h.vertex_idx.tolist() == CHORD_HULL_VERTICES
        assert h.slopes.tolist() == [0.5]
        assert all_chords_hull(line.ts, line.vs).tolist() == CHORD_HULL_VERTICES

    def test_collinear_merged(self):
        h = lower_hull(PolyLine.of([0, 1, 2, 3], [1, 3, 5, 7]))
        assert h.vertex_idx.tolist() == [0, 3]
        assert h.slopes == pytest.approx([2.0])

    def test_needs_two_points(self):
        with pytest.raises(InvalidInput):
            PolyLine.of([0.0], [1.0])
        with pytest.raises(InvalidInput):
            PolyLine.of([0.0, 0.0], [1.0, 2.0])

    def test_matches_all_chords_oracle(self):
        rng = np.random.default_rng(0)
        for k in range(500):
            line = random_line(rng, int(rng.integers(2, 31)), integer=k % 2 == 0)
            got = lower_hull(line).vertex_idx
            np.testing.assert_array_equal(got, all_chords_hull(line.ts, line.vs))

    @given(lines)
    def test_minorant_convex_endpoints(self, line):
        h = lower_hull(line)
        vals = h.values_on(line)
        scale = 1 + np.abs(line.vs).max()
        assert np.all(vals <= line.vs + 1e-9 * scale)
        np.testing.assert_allclose(vals[h.vertex_idx], line.vs[h.vertex_idx])
        assert np.all(np.diff(h.slopes) >= -1e-9 * scale)
        assert h.vertex_idx[0] == 0 and h.vertex_idx[-1] == len(line.ts) - 1

    @given(lines, arrays(np.float64, 5, elements=st.floats(-50, 50)))
    def test_maximality(self, line, slopes):
        # every convex minorant is a max of supporting lines, each below the hull
        h = lower_hull(line)
        hull_vals = h.values_on(line)
        scale = 1 + np.abs(line.vs).max() + np.abs(slopes).max() * np.abs(line.ts).max()
        for s in slopes:
            support = np.min(line.vs - s * line.ts) + s * line.ts
            assert np.all(support <= hull_vals + 1e-9 * scale)


class TestLeftSlope:
    def test_parabola_at_zero(self):
        delta = 0.25
        ts = delta * np.arange(-8, 9)
        line = PolyLine.of(ts, ts**2)
        assert sl_gcm(line, 0.0) == pytest.approx(-delta)

    def test_single_segment(self):
        line = PolyLine.of([0, 1, 2], [0, 5, 1])
        for t0 in (0.1, 1.0, 1.7, 2.0):
            assert sl_gcm(line, t0) == pytest.approx(0.5)

    def test_vertex_takes_left_segment(self):
        line = PolyLine.of([0, 1, 2], [0, 0, 3])
        assert sl_gcm(line, 1.0) == 0.0
        assert sl_gcm(line, 1.0 + 1e-9) == 3.0

    @pytest.mark.parametrize("t0", [0.0, -1.0, 2.5])
    def test_out_of_domain(self, t0):
        line = PolyLine.of([0, 1, 2], [0, 5, 1])
        with pytest.raises(OutOfDomain):
            sl_gcm(line, t0)

    @given(lines, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_monotone_in_t0(self, line, a, b):
        lo, hi = line.ts[0], line.ts[-1]
        s1, s2 = sorted((a, b))
        t1, t2 = lo + (hi - lo) * max(s1, 1e-6), lo + (hi - lo) * max(s2, 1e-6)
        h = lower_hull(line)
        assert left_slope(h, line, t1) <= left_slope(h, line, t2)


class TestLcm:
    def test_concave_line(self):
        ts = np.linspace(-1, 1, 11)
        line = PolyLine.of(ts, -(ts**2))
        # left derivative of the chord ending at 0.2
        assert sl_lcm(line, 0.2) == pytest.approx(-(0.2**2 - 0.0**2) / 0.2)

    def test_v_shape(self):
        assert sl_lcm(PolyLine.of([-1, 0, 1], [1, 0, 1]), 0.0) == pytest.approx(0.0)

    @given(lines, st.floats(0.01, 1.0))
    def test_duality(self, line, frac):
        t0 = line.ts[0] + frac * (line.ts[-1] - line.ts[0])
        neg = PolyLine.of(line.ts, -line.vs)
        assert sl_lcm(line, t0) == -left_slope(lower_hull(neg), neg, t0)


class TestCusumRoute:
    def test_monotone(self):
        s = SortedSample.presorted([0, 1, 2], [1.0, 2.0, 3.0])
        np.testing.assert_allclose(isotonic_via_cusum(s).levels, [1, 2, 3])

    def test_pooled(self):
        s = SortedSample.presorted([0, 1, 2], [3.0, 1.0, 2.0])
        np.testing.assert_allclose(cusum_fitted(s), [2, 2, 2])

    def test_cross_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            n = int(rng.integers(1, 101))
            s = sort_xy(rng.uniform(size=n), rng.normal(size=n) + np.linspace(0, rng.uniform(0, 3), n))
            np.testing.assert_allclose(cusum_fitted(s), pava(s).fitted, atol=1e-9)
            a, b = pava(s).step, isotonic_via_cusum(s)
            np.testing.assert_allclose(evaluate(a, s.xs), evaluate(b, s.xs), atol=1e-9)

    def test_three_way(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            n = int(rng.integers(1, 60))
            s = sort_xy(rng.uniform(size=n), rng.normal(size=n))
            f, g = pava(s).step, isotonic_via_cusum(s)
            for x in s.xs:
                assert evaluate(f, x) == pytest.approx(minmax_at(s, x), abs=1e-9)
                assert evaluate(g, x) == pytest.approx(minmax_at(s, x), abs=1e-9)
