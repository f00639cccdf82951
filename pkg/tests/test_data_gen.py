import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isoinfer.data_gen import (
    DgpSpec,
    Explicit,
    FromDrift,
    Gaussian,
    Heteroscedastic,
    Uniform,
    check_A3,
    draw,
    mean_from_drift,
    mean_near_flat_example,
    named_dgp,
)
from isoinfer.errors import InvalidDrift, InvalidInput
from isoinfer.limit_law import Asymmetric, NearFlat, Rate, WrightPoly, make_drift
from isoinfer.stats import ks_critical

PROBE = np.linspace(-1, 1, 401)
N_GRID = [10, 100, 1000, 10_000, 100_000, 1_000_000]


class TestMeans:
    def test_wright_construction(self):
        d = make_drift(WrightPoly(1.0, 2.0), rate=Rate.power(0.2))
        n = 500
        f = mean_from_drift(d, 0.0, 0.0, n)
        s = n**0.2
        np.testing.assert_allclose(f(PROBE), n ** -0.4 * np.sign(s * PROBE) * (s * PROBE) ** 2, rtol=1e-12)
        # with this rate the construction is the fixed x^2 sgn x
        np.testing.assert_allclose(f(PROBE), np.sign(PROBE) * PROBE**2, rtol=1e-12)

    def test_value_at_x0(self):
        d = make_drift(Asymmetric(0.5, 1.0, 1.0, 1.0))
        assert mean_from_drift(d, 1.5, 0.2, 77)(0.2) == 1.5

    @given(st.sampled_from(["psi1", "psi2", "psi3", "psi4", "asym", "slowvar", "nearflat"]), st.integers(1, 10**6))
    def test_monotone(self, name, n):
        f = named_dgp(name, n).dgp.mean()
        assert np.all(np.diff(f(PROBE)) >= 0)

    def test_infinite_shape_rejected(self):
        with pytest.raises(InvalidDrift):
            mean_from_drift(make_drift(Asymmetric(1.0, 1.0, 1.0, 2.0)), 0.0, 0.0, 10)

    def test_near_flat(self):
        f = mean_near_flat_example(32)
        assert f(0.0) == 0.0
        assert f(1.0) == pytest.approx(0.5 + 1 / 6)
        h = 1e-6
        assert (f(h) - f(-h)) / (2 * h) == pytest.approx(32 ** -0.2, rel=1e-8)


class TestDraw:
    def test_noiseless(self):
        nd = named_dgp("psi2", 200, sigma=0.0)
        s = draw(nd.dgp, 4)
        f = nd.dgp.mean()
        np.testing.assert_array_equal(s.ys, f(s.xs))
        assert s.truth_at_x0 == 0.0 and len(s) == 200

    def test_reproducible(self):
        dgp = named_dgp("wright", 50, theta=1.0).dgp
        a, b = draw(dgp, 7), draw(dgp, 7)
        np.testing.assert_array_equal(a.pairs, b.pairs)
        assert not np.array_equal(a.ys, draw(dgp, 8).ys)

    def test_noise_mean(self):
        dgp = DgpSpec(Explicit("wright_fixed", theta=1.0), 10**6)
        s = draw(dgp, 1)
        xi = s.ys - s.xs
        assert abs(xi.mean()) < 4 / math.sqrt(len(xi))

    def test_covariate_uniform(self):
        s = draw(named_dgp("psi1", 20_000).dgp, 2)
        ecdf = np.arange(1, len(s) + 1) / len(s)
        cdf = Uniform().cdf(np.sort(s.xs))
        ks = max(np.max(ecdf - cdf), np.max(cdf - (ecdf - 1 / len(s))))
        assert ks < ks_critical(len(s), 10**9) * 1.0001

    def test_heteroscedastic_conditional_mean(self):
        dgp = DgpSpec(Explicit("wright_fixed", theta=1.0), 400_000, noise=Heteroscedastic())
        s = draw(dgp, 3)
        xi = s.ys - s.xs
        bins = np.digitize(s.xs, np.linspace(-1, 1, 11)[1:-1])
        for b in range(10):
            e = xi[bins == b]
            assert abs(e.mean()) < 4 * e.std() / math.sqrt(len(e))
        edge = np.abs(s.xs) > 0.9
        assert xi[edge].std() == pytest.approx(1 + 0.9**2 / 2, rel=0.05)

    def test_spec_validation(self):
        with pytest.raises(InvalidInput):
            DgpSpec(Explicit("near_flat"), 10, x0=1.0)
        with pytest.raises(InvalidInput):
            DgpSpec(Explicit("near_flat"), 0)
        with pytest.raises(InvalidInput):
            Explicit("nope")
        with pytest.raises(InvalidInput):
            Gaussian(-1.0)
        with pytest.raises(InvalidInput):
            named_dgp("rates", 10)
        with pytest.raises(InvalidInput):
            named_dgp("nope", 10)


class TestA3:
    @pytest.mark.parametrize("name", ["psi1", "psi2", "psi3", "psi4", "asym", "slowvar"])
    def test_construction_is_exact(self, name):
        nd = named_dgp(name, 10)
        for c in (-1.7, -0.3, 0.5, 2.0):
            for n, val, dev in check_A3(nd.dgp, nd.drift, c, N_GRID):
                assert abs(dev) <= 1e-12 * (1 + abs(val))

    @pytest.mark.parametrize("theta", [0.5, 1.0, 2.0, 5.0])
    def test_wright_fixed_is_exact(self, theta):
        nd = named_dgp("wright", 10, theta=theta)
        for n, val, dev in check_A3(nd.dgp, nd.drift, 1.3, N_GRID):
            assert abs(dev) <= 1e-10 * (1 + abs(val))

    def test_near_flat_converges(self):
        nd = named_dgp("nearflat", 10)
        rows = check_A3(nd.dgp, nd.drift, 1.0, N_GRID)
        devs = [abs(d) for _, _, d in rows]
        assert all(b < a for a, b in zip(devs, devs[1:]))
        # psi_n(1) - 1 = n^(-1/5) / 6
        for n, _, d in rows:
            assert d == pytest.approx(n**-0.2 / 6, rel=1e-6)

    def test_monotone_in_c(self):
        for name in ("nearflat", "psi3", "wright"):
            nd = named_dgp(name, 10)
            for n in (50, 5000):
                vals = [check_A3(nd.dgp, nd.drift, c, [n])[0][1] for c in np.linspace(-3, 3, 25) if c != 0]
                assert np.all(np.diff(vals) >= 0)

    def test_c_zero(self):
        nd = named_dgp("psi1", 10)
        with pytest.raises(InvalidInput):
            check_A3(nd.dgp, nd.drift, 0.0, [10])


class TestNamed:
    def test_limit_parameters(self):
        nd = named_dgp("asym", 100)
        assert nd.drift.h0 == 0.5 and nd.drift.sigma0_sq == 1.0
        assert nd.rate(1000) == pytest.approx(10.0)
        het = named_dgp("psi1", 100, heteroscedastic=True)
        assert het.drift.sigma0_sq == 1.0

    def test_rates_family(self):
        nd = named_dgp("rates", 1000, alpha=0.5)
        assert nd.rate(1000) == pytest.approx(1000**0.5)
        assert isinstance(nd.dgp.mean_fn, FromDrift)

    def test_near_flat_family(self):
        nd = named_dgp("nearflat", 32)
        assert isinstance(nd.drift.kind, NearFlat)
        assert nd.dgp.mean()(1.0) == pytest.approx(0.5 + 1 / 6)
