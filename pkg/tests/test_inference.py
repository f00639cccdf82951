import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isoinfer.data_gen import RawSample, draw, named_dgp
from isoinfer.errors import DegenerateSubsampling, InvalidInput, SampleTooSmall
from isoinfer.inference import (
    ConfidenceInterval,
    hulc_band,
    hulc_batch_count,
    hulc_ci,
    hulc_miscoverage_bound,
    hulc_plan,
    hulc_threshold,
    median_bias,
    median_bias_from,
    oracle_pivot_ci,
    pivot_scale,
    subsample_ci,
    subsample_fit,
)
from isoinfer.isotonic import fit_value_at


def sample(n, seed=0, name="wright", **kw):
    return draw(named_dgp(name, n, **kw).dgp, seed)


class TestHulcPlan:
    def test_five_percent(self):
        assert hulc_batch_count(0.05) == 6
        assert hulc_threshold(0.05) == pytest.approx(0.6)

    @pytest.mark.parametrize("k", [1, 2, 3, 4, 6, 10])
    def test_dyadic_alpha_has_no_mixing(self, k):
        alpha = 2.0**-k
        assert hulc_batch_count(alpha) == k + 1
        assert hulc_threshold(alpha) == 0.0
        for seed in range(20):
            assert hulc_plan(alpha, seed, 100).B_star == k + 1

    @given(st.floats(1e-4, 0.9))
    def test_exact_miscoverage(self, alpha):
        B, tau = hulc_batch_count(alpha), hulc_threshold(alpha)
        assert 2.0 ** (1 - B) <= alpha * (1 + 1e-12) < 2.0 ** (2 - B)
        assert tau * 2.0 ** (2 - B) + (1 - tau) * 2.0 ** (1 - B) == pytest.approx(alpha)

    def test_randomised_count_frequency(self):
        fewer = np.mean([hulc_plan(0.05, s, 60).B_star == 5 for s in range(4000)])
        assert abs(fewer - 0.6) < 4 * math.sqrt(0.24 / 4000)

    @given(st.integers(6, 300), st.integers(0, 10**6))
    def test_partition(self, n, seed):
        plan = hulc_plan(0.05, seed, n)
        idx = np.concatenate(plan.batches())
        assert sorted(idx.tolist()) == list(range(n))
        sizes = [len(b) for b in plan.batches()]
        assert max(sizes) - min(sizes) <= 1

    def test_too_small(self):
        with pytest.raises(SampleTooSmall):
            hulc_plan(0.05, 0, 5)

    def test_bad_alpha(self):
        with pytest.raises(InvalidInput):
            hulc_batch_count(1.0)


class TestHulc:
    def test_constant_responses_degenerate(self):
        data = RawSample(np.linspace(-1, 1, 50), np.full(50, 3.5), 0, 3.5)
        ci = hulc_ci(data, 0.0, 0.05, seed=1)
        assert ci.lo == ci.hi == 3.5

    def test_reproducible_and_ordered(self):
        data = sample(300)
        a, b = hulc_ci(data, 0.0, 0.05, 4), hulc_ci(data, 0.0, 0.05, 4)
        assert a == b and a.lo <= a.hi
        assert a.method == "HulC" and a.level == 0.95

    def test_range_of_batch_fits(self):
        data = sample(120, seed=2)
        plan = hulc_plan(0.1, 9, len(data))
        est = [fit_value_at(data.xs[b], data.ys[b], 0.0) for b in plan.batches()]
        ci = hulc_ci(data, 0.0, 0.1, 9)
        assert (ci.lo, ci.hi) == (min(est), max(est))

    def test_band_single_point(self):
        data = sample(200, seed=3)
        (band,) = hulc_band(data, [0.1], 0.05, 7)
        ci = hulc_ci(data, 0.1, 0.05, 7)
        assert (band.lo, band.hi) == pytest.approx((ci.lo, ci.hi))

    def test_band_tightens_and_is_monotone(self):
        data = sample(400, seed=5)
        grid = np.linspace(-0.8, 0.8, 33)
        band = hulc_band(data, grid, 0.05, 2)
        raw = [hulc_ci(data, x, 0.05, 2) for x in grid]
        lo = np.array([b.lo for b in band])
        hi = np.array([b.hi for b in band])
        assert np.all(np.diff(lo) >= 0) and np.all(np.diff(hi) >= 0)
        assert np.all(lo >= np.array([r.lo for r in raw]) - 1e-12)
        assert np.all(hi <= np.array([r.hi for r in raw]) + 1e-12)

    def test_band_bad_grid(self):
        with pytest.raises(InvalidInput):
            hulc_band(sample(50), [0.3, 0.1], 0.05, 0)

    def test_miscoverage_bound(self):
        assert hulc_miscoverage_bound(0.05, 0.0) == 0.05
        d = 0.01
        assert hulc_miscoverage_bound(0.05, d) == pytest.approx(0.05 * (1 + 2 * (6 * d) ** 2 * math.exp(12 * d)))


class FixedNoiseStub:
    """Subsample estimate ``m^(-1/3) z_k``: the k-th call at each size reuses noise ``z_k``."""

    def __init__(self, K=200):
        self.z = np.random.default_rng(3).standard_normal(K)
        self.calls = 0

    def __call__(self, xs, ys, x0):
        z = self.z[self.calls % len(self.z)]
        self.calls += 1
        return len(xs) ** (-1 / 3) * z


def _random_noise_stub(xs, ys, x0):
    return len(xs) ** (-1 / 3) * ys[0]


class TestSubsample:
    def test_rate_recovery(self):
        data = sample(5000)
        for seed in range(3):
            assert subsample_fit(data, 0.0, seed, FixedNoiseStub()).beta_hat == pytest.approx(1 / 3, abs=0.05)

    def test_rate_recovery_random_noise(self):
        rng = np.random.default_rng(0)
        n = 200_000
        data = RawSample(rng.uniform(-1, 1, n), rng.standard_normal(n), 0, 0.0)
        fits = [subsample_fit(data, 0.0, seed, _random_noise_stub) for seed in range(10)]
        # sd of log(IQR1/IQR2) with 200 normal draws per size is about 0.117
        sd = 0.117 / math.log(fits[0].m2 / fits[0].m1) / math.sqrt(len(fits))
        assert np.mean([f.beta_hat for f in fits]) == pytest.approx(1 / 3, abs=4 * sd)

    def test_sizes(self):
        f = subsample_fit(sample(1000), 0.0, 1)
        assert (f.m1, f.m2) == (31, 99)
        assert len(f.roots) == 200

    def test_degenerate(self):
        data = RawSample(np.linspace(-1, 1, 100), np.ones(100), 0, 1.0)
        with pytest.raises(DegenerateSubsampling):
            subsample_ci(data, 0.0, 0.05, 0)

    def test_too_small(self):
        with pytest.raises(SampleTooSmall):
            subsample_ci(sample(10), 0.0, 0.05, 0)

    def test_ordered(self):
        ci = subsample_ci(sample(500, seed=1), 0.0, 0.05, 3)
        assert ci.lo <= ci.hi and ci.method == "Subsample"


class TestOraclePivot:
    law = np.random.default_rng(4).standard_normal(5000)

    def test_unit_scale(self):
        assert pivot_scale(1.0, 1.0, 0.5, 1.0) == pytest.approx(1.0)

    def test_half_width(self):
        data = sample(1000, theta=1.0)
        ci = oracle_pivot_ci(data, 0.0, 0.05, 1.0, 1.0, 0.5, 1.0, self.law)
        q = np.quantile(np.abs(self.law), 0.95, method="hazen")
        assert ci.width / 2 == pytest.approx(1000 ** (-1 / 3) * q)
        assert (ci.lo + ci.hi) / 2 == pytest.approx(fit_value_at(data.xs, data.ys, 0.0))

    def test_nesting(self):
        data = sample(400, theta=2.0)
        cis = [oracle_pivot_ci(data, 0.0, a, 2.0, 1.0, 0.5, 1.0, self.law) for a in (0.01, 0.05, 0.1, 0.3)]
        for wide, narrow in zip(cis, cis[1:]):
            assert wide.lo <= narrow.lo and narrow.hi <= wide.hi


class TestEquivariance:
    @pytest.mark.parametrize("c", [-7.25, 0.5, 1e3])
    def test_shift(self, c):
        data = sample(600, seed=8)
        moved = data.shifted(c)
        law = np.random.default_rng(1).standard_normal(2000)
        pairs = [
            (hulc_ci(data, 0.0, 0.05, 2), hulc_ci(moved, 0.0, 0.05, 2)),
            (subsample_ci(data, 0.0, 0.05, 2), subsample_ci(moved, 0.0, 0.05, 2)),
            (
                oracle_pivot_ci(data, 0.0, 0.05, 2.0, 1.0, 0.5, 1.0, law),
                oracle_pivot_ci(moved, 0.0, 0.05, 2.0, 1.0, 0.5, 1.0, law),
            ),
        ]
        for a, b in pairs:
            tol = 1e-9 * (1 + abs(c))
            assert b.lo == pytest.approx(a.lo + c, abs=tol)
            assert b.hi == pytest.approx(a.hi + c, abs=tol)


class TestConfidenceInterval:
    def test_validation(self):
        with pytest.raises(InvalidInput):
            ConfidenceInterval(1.0, 0.0, 0.95, "HulC", 0.0)
        with pytest.raises(InvalidInput):
            ConfidenceInterval(0.0, 1.0, 0.95, "Bootstrap", 0.0)

    def test_record(self):
        ci = ConfidenceInterval(-1.0, 2.0, 0.9, "OraclePivot", 0.25)
        assert ci.as_record() == {"lo": -1.0, "hi": 2.0, "level": 0.9, "method": "OraclePivot", "x0": 0.25}
        assert ci.width == 3.0 and ci.contains(2.0) and not ci.contains(2.5)


class TestMedianBias:
    def test_always_above(self):
        dgp = named_dgp("wright", 50, theta=1.0).dgp
        rep = median_bias(dgp, 0.0, 100, 0, estimator=lambda xs, ys, x0: 10.0)
        assert rep.estimate == 0.5
        assert rep.mc_se == pytest.approx(0.05)

    def test_ties_on_both_sides(self):
        rep = median_bias_from([0.0, 0.0, 1.0, -1.0], 0.0)
        assert (rep.p_below, rep.p_above) == (0.75, 0.75)
        assert rep.estimate == 0.0

    def test_formula(self):
        rep = median_bias_from([1.0, 2.0, 3.0, -1.0], 0.0)
        assert rep.estimate == pytest.approx(0.25)

    def test_needs_reps(self):
        with pytest.raises(InvalidInput):
            median_bias(named_dgp("psi1", 50).dgp, 0.0, 99, 0)
