import math

import numpy as np
import pytest
import scipy.special as sp
from hypothesis import given
from hypothesis import strategies as st

from cryptorates.exceptions import ConvergenceError, DomainError
from cryptorates.numerics import (
    QuadratureSpec,
    bessel_i,
    bessel_i_scaled,
    erf,
    erf_inv,
    erfc,
    integrate,
    lower_gamma_int,
    normal_cdf,
    regularized_lower_gamma_int,
    regularized_upper_gamma_int,
    upper_gamma_int,
)


class TestErf:
    @pytest.mark.parametrize("x, expected", [(0.0, 0.0), (1.0, 0.8427007929497149), (-1.0, -0.8427007929497149), (6.0, 1.0)])
    def test_values(self, x, expected):
        assert erf(x) == pytest.approx(expected, abs=1e-15)

    def test_array_matches_scipy(self):
        x = np.linspace(-6, 6, 1001)
        np.testing.assert_allclose(erf(x), sp.erf(x), rtol=1e-15, atol=1e-16)
        np.testing.assert_allclose(erfc(x), sp.erfc(x), rtol=1e-14)

    def test_scalar_returns_float(self):
        assert isinstance(erf(0.3), float)

    @pytest.mark.parametrize("bad", [math.nan, math.inf])
    def test_non_finite_raises(self, bad):
        with pytest.raises(DomainError):
            erf(bad)

    @given(st.floats(-10, 10))
    def test_odd(self, x):
        assert erf(-x) == -erf(x)

    def test_normal_cdf_tail(self):
        assert normal_cdf(-30.0) == pytest.approx(sp.ndtr(-30.0), rel=1e-13)
        assert normal_cdf(0.0) == 0.5
        np.testing.assert_allclose(normal_cdf(np.array([-2.0, 1.0])), sp.ndtr([-2.0, 1.0]), rtol=1e-14)


class TestErfInv:
    @pytest.mark.parametrize("p", [0.0, 0.5, -0.5, 0.9, 0.999999, 1 - 1e-15, 1e-300])
    def test_matches_scipy(self, p):
        assert erf_inv(p) == pytest.approx(sp.erfinv(p), rel=2e-15, abs=1e-300)

    def test_known_value(self):
        # oracle: scipy erfinv(0.5)
        assert erf_inv(0.5) == pytest.approx(0.4769362762044699, rel=1e-15)

    @given(st.floats(-0.999999, 0.999999))
    def test_roundtrip(self, p):
        assert erf(erf_inv(p)) == pytest.approx(p, abs=2e-16)

    @pytest.mark.parametrize("p", [1.0, -1.0, 1.5, math.nan])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            erf_inv(p)

    def test_vectorised(self):
        p = np.array([-0.3, 0.0, 0.7])
        np.testing.assert_allclose(erf_inv(p), sp.erfinv(p), rtol=1e-15)


class TestBessel:
    @pytest.mark.parametrize("n", [0, 1])
    def test_against_scipy(self, n):
        v = np.concatenate([np.linspace(0, 40, 401), [60.0, 200.0, 700.0]])
        np.testing.assert_allclose(bessel_i_scaled(n, v), sp.ive(n, v), rtol=3e-15, atol=1e-300)
        small = v[v < 600]
        np.testing.assert_allclose(bessel_i(n, small), sp.iv(n, small), rtol=3e-15)

    def test_continuity_at_switch(self):
        lo, hi = bessel_i_scaled(1, 30.0), bessel_i_scaled(1, np.nextafter(30.0, 31.0))
        assert hi == pytest.approx(lo, rel=1e-14)

    def test_known_value(self):
        assert bessel_i(0, 1.0) == pytest.approx(1.2660658777520082, rel=1e-15)

    @pytest.mark.parametrize("n, v", [(2, 1.0), (0, -1.0), (1, math.nan)])
    def test_domain(self, n, v):
        with pytest.raises(DomainError):
            bessel_i(n, v)


class TestIncompleteGamma:
    @pytest.mark.parametrize("k", [0, 1, 5, 20, 60])
    @pytest.mark.parametrize("z", [0.0, 1e-3, 0.5, 3.0, 25.0, 120.0])
    def test_regularized_against_scipy(self, k, z):
        assert regularized_upper_gamma_int(k, z) == pytest.approx(sp.gammaincc(k + 1, z), rel=1e-13, abs=1e-300)
        assert regularized_lower_gamma_int(k, z) == pytest.approx(sp.gammainc(k + 1, z), rel=1e-13, abs=1e-300)

    def test_unregularized(self):
        assert upper_gamma_int(1, 1.0) == pytest.approx(2 / math.e, rel=1e-15)
        assert upper_gamma_int(3, 0.0) == 6.0
        assert lower_gamma_int(2, 4.0) + upper_gamma_int(2, 4.0) == pytest.approx(2.0, rel=1e-15)

    def test_infinite_argument(self):
        assert regularized_upper_gamma_int(4, math.inf) == 0.0
        assert regularized_lower_gamma_int(4, math.inf) == 1.0

    @pytest.mark.parametrize("k, z", [(-1, 1.0), (1.5, 1.0), (1, -0.1)])
    def test_domain(self, k, z):
        with pytest.raises(DomainError):
            upper_gamma_int(k, z)

    @given(st.integers(0, 40), st.floats(0, 80))
    def test_complementary(self, k, z):
        s = regularized_lower_gamma_int(k, z) + regularized_upper_gamma_int(k, z)
        assert s == pytest.approx(1.0, abs=1e-14)


class TestIntegrate:
    def test_polynomial(self):
        val, err = integrate(lambda x: x, QuadratureSpec(0, 1))
        assert val == pytest.approx(0.5, abs=1e-15)
        assert err <= 1e-12

    def test_gaussian_half_line(self):
        val, _ = integrate(lambda x: np.exp(-x * x), QuadratureSpec(0, math.inf, 1e-14, 1e-13))
        assert val == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-13)

    @pytest.mark.parametrize("eta", [0.1, 0.5, 1.0, 2.0, 4.0])
    def test_bessel_gaussian_integral(self, eta):
        # int_0^inf e^{-u^2/2} I_1(eta u) du = (e^{eta^2/2} - 1)/eta, written with the
        # scaled Bessel function so no factor overflows
        def f(u):
            return np.exp(-u * u / 2 + eta * u) * bessel_i_scaled(1, eta * u)

        val, _ = integrate(f, QuadratureSpec(0, math.inf, 1e-14, 1e-13))
        assert val == pytest.approx(math.expm1(eta * eta / 2) / eta, rel=1e-12)

    def test_scalar_only_integrand(self):
        val, _ = integrate(lambda x: math.sin(x), QuadratureSpec(0, math.pi))
        assert val == pytest.approx(2.0, rel=1e-13)

    def test_empty_interval(self):
        assert integrate(lambda x: x, QuadratureSpec(1.0, 1.0)) == (0.0, 0.0)

    def test_non_convergence_carries_estimate(self):
        spec = QuadratureSpec(0, 1, abs_tol=1e-15, rel_tol=1e-15, max_subdivisions=3)
        with pytest.raises(ConvergenceError) as info:
            integrate(lambda x: np.sqrt(np.abs(x - 1 / 3)), spec)
        exact = 2 / 3 * ((1 / 3) ** 1.5 + (2 / 3) ** 1.5)
        assert info.value.best_estimate == pytest.approx(exact, rel=1e-2)

    def test_non_finite_integrand(self):
        with pytest.raises(DomainError):
            integrate(lambda x: 1.0 / (x - 0.5) ** 0 * np.where(x > 0.7, np.inf, 1.0), QuadratureSpec(0, 1))

    @pytest.mark.parametrize(
        "kwargs",
        [dict(abs_tol=0), dict(rel_tol=-1), dict(max_subdivisions=0), dict(lower=2.0, upper=1.0), dict(lower=-math.inf)],
    )
    def test_spec_validation(self, kwargs):
        with pytest.raises(DomainError):
            QuadratureSpec(**kwargs)


class TestBreakPoints:
    def test_narrow_spike(self):
        # a Gaussian of width 1e-4 inside [0, 10] is invisible to the first panel
        c, w = 3.3, 1e-4
        f = lambda x: np.exp(-0.5 * ((x - c) / w) ** 2) / (w * math.sqrt(2 * math.pi))  # noqa: E731
        val, _ = integrate(f, QuadratureSpec(0.0, 10.0, 1e-14, 1e-12), points=[c - 8 * w, c, c + 8 * w])
        assert val == pytest.approx(1.0, rel=1e-10)

    def test_points_on_half_line(self):
        val, _ = integrate(lambda x: np.exp(-x), QuadratureSpec(0.0, math.inf, 1e-14, 1e-12), points=[1.0, 5.0])
        assert val == pytest.approx(1.0, rel=1e-12)

    def test_points_outside_ignored(self):
        val, _ = integrate(lambda x: x, QuadratureSpec(0.0, 1.0), points=[-1.0, 0.0, 2.0])
        assert val == pytest.approx(0.5, rel=1e-14)
