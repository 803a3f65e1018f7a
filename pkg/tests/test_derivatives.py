import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special, stats

from cryptorates.derivatives import (
    BondOptionSpec,
    CapletSpec,
    PriceQuote,
    bond_call_b4,
    bond_put_b4,
    caplet_price,
    caplet_price_expansion,
    critical_numeraire,
    digital_call_price,
    instrument_from_dict,
    simple_rate,
    strike_notional,
)
from cryptorates.exceptions import DomainError, SeriesDivergenceError, UnsupportedModelError
from cryptorates.kernels import Bessel3, Bessel4, BesselN, initial_state
from cryptorates.mc_oracle import price_claim, price_path_claim
from cryptorates.stochastic import FactorState, RngStream, VolatilityCurve
from cryptorates.term_structure import bond_price, bond_price_from_variance

B3, B4 = Bessel3(), Bessel4()
C06 = VolatilityCurve.constant(0.6)
C075 = VolatilityCurve.constant(0.75)


def radial_expectation(n, S0t, g, upper=np.inf):
    """E[|X_t|^{2-n} g(|X_t|)] for an n-dim Gaussian started at unit norm.

    |X_t|^2 / S0t is noncentral chi-square with n degrees of freedom.
    """
    law = stats.ncx2(df=n, nc=1.0 / S0t, scale=S0t)

    def f(y):
        r = math.sqrt(y)
        return r ** (2 - n) * g(r) * law.pdf(y)

    val, _ = integrate.quad(f, 0, upper**2, epsabs=1e-13, epsrel=1e-12, limit=400)
    return val


class TestSpecs:
    @pytest.mark.parametrize("args", [(1.0, 1.0, 0.5), (-0.1, 1.0, 0.5), (1.0, 2.0, 0.0), (1.0, 2.0, 1.0)])
    def test_bond_option_validation(self, args):
        with pytest.raises(DomainError):
            BondOptionSpec(*args)

    def test_bad_kind(self):
        with pytest.raises(DomainError):
            BondOptionSpec(1.0, 2.0, 0.5, "straddle")

    @pytest.mark.parametrize("args", [(2.0, 1.0, 0.1), (1.0, 2.0, -0.1), (1.0, 2.0, 0.1, 0.0)])
    def test_caplet_validation(self, args):
        with pytest.raises(DomainError):
            CapletSpec(*args)

    def test_strike_notional(self):
        K, N = strike_notional(CapletSpec(1.0, 1.5, 0.2, 2.0))
        assert K == pytest.approx(1 / 1.1)
        assert N == pytest.approx(2.0 * 1.1 / 0.5)

    def test_simple_rate(self):
        assert simple_rate(0.8, 0.5) == 0.5
        with pytest.raises(DomainError):
            simple_rate(0.0, 1.0)

    def test_quote_json(self):
        q = PriceQuote(0.1, "series(20)", 1e-17)
        assert json.loads(q.to_json()) == {"value": 0.1, "method": "series(20)", "err_est": 1e-17}


class TestCriticalNumeraire:
    @pytest.mark.parametrize("model", [B3, B4])
    @pytest.mark.parametrize("K", [0.1, 0.5, 0.9])
    def test_inverts_bond_price(self, model, K):
        spec = BondOptionSpec(1.0, 2.5, K)
        xs = critical_numeraire(model, spec, C06)
        x = (0.0,) * (model.dim - 1) + (xs,)
        assert bond_price(model, FactorState(1.0, x), C06, 2.5) == pytest.approx(K, rel=1e-12)

    def test_unsupported(self):
        with pytest.raises(UnsupportedModelError):
            critical_numeraire(BesselN(5), BondOptionSpec(1, 2, 0.5), C06)


class TestDigital:
    def test_zero_strike_limit(self):
        spec = BondOptionSpec(1.0, 2.0, 1e-15, "digital-call")
        P0t = bond_price(B3, initial_state(B3), C075, 1.0)
        assert digital_call_price(B3, None, spec, C075) == pytest.approx(P0t, abs=1e-12)

    @pytest.mark.parametrize("K", [0.2, 0.5, 0.8])
    def test_radial_oracle(self, K):
        spec = BondOptionSpec(1.0, 2.0, K, "digital-call")
        xs = critical_numeraire(B3, spec, C075)
        ref = radial_expectation(3, 0.5625, lambda r: float(r > xs))
        assert digital_call_price(B3, None, spec, C075) == pytest.approx(ref, abs=1e-8)

    @given(st.floats(0.01, 0.98), st.floats(0.01, 0.98))
    def test_decreasing_in_strike(self, a, b):
        lo, hi = sorted((a, b))
        d = [digital_call_price(B3, None, BondOptionSpec(1.0, 3.0, k, "digital-call"), C075) for k in (lo, hi)]
        assert 0 <= d[1] <= d[0] <= bond_price(B3, initial_state(B3), C075, 1.0) + 1e-15

    def test_later_state(self):
        s = FactorState(0.5, (0.0, 0.4, 0.0))
        spec = BondOptionSpec(1.0, 2.0, 0.5, "digital-call")
        xs = critical_numeraire(B3, spec, C075)
        S = 0.5625 * 0.5
        # 3-d law started at radius 0.4, weighted by 1/r and renormalised by pi_s
        law = stats.ncx2(df=3, nc=0.16 / S, scale=S)
        ref, _ = integrate.quad(lambda y: 0.4 / math.sqrt(y) * law.pdf(y), xs**2, np.inf, epsabs=1e-13)
        assert digital_call_price(B3, s, spec, C075) == pytest.approx(ref, abs=1e-8)

    def test_valuation_after_expiry(self):
        with pytest.raises(DomainError):
            digital_call_price(B3, FactorState(1.0, (1, 0, 0)), BondOptionSpec(1.0, 2.0, 0.5, "digital-call"), C075)

    def test_model_check(self):
        with pytest.raises(UnsupportedModelError):
            digital_call_price(B4, None, BondOptionSpec(1.0, 2.0, 0.5, "digital-call"), C075)

    def test_monte_carlo(self, within_3se):
        spec = BondOptionSpec(1.0, 2.0, 0.4, "digital-call")
        S = 0.5625

        def payoff(X):
            return (bond_price_from_variance(B3, X, S) > 0.4).astype(float)

        est = price_claim(B3, C075, payoff, 1.0, 100_000, RngStream(11), vectorized=True)
        within_3se(est.mean, est.std_err, digital_call_price(B3, None, spec, C075))


class TestCaplet:
    @pytest.mark.parametrize("t, T", [(1.0, 2.0), (0.5, 0.75), (2.0, 5.0)])
    def test_zero_cap_identity(self, t, T):
        P = lambda u: bond_price(B3, initial_state(B3), C075, u)  # noqa: E731
        q = caplet_price(B3, CapletSpec(t, T, 0.0, 2.0), C075)
        assert q.value == pytest.approx(2.0 * (P(t) - P(T)) / (T - t), abs=1e-9)

    @pytest.mark.parametrize("R", [0.0, 0.05, 0.3, 1.0])
    def test_expansion_matches(self, R):
        spec = CapletSpec(1.0, 2.0, R)
        assert caplet_price_expansion(B3, spec, C075) == pytest.approx(caplet_price(B3, spec, C075).value, abs=1e-10)

    @pytest.mark.parametrize("R", [0.05, 0.3])
    def test_radial_oracle(self, R):
        spec = CapletSpec(1.0, 2.0, R)
        K, N = strike_notional(spec)
        root = math.sqrt(2 * 0.5625)
        xs = root * special.erfinv(K)
        ref = N * radial_expectation(3, 0.5625, lambda r: K - math.erf(r / root), upper=xs)
        assert caplet_price(B3, spec, C075).value == pytest.approx(ref, abs=1e-8)

    @given(st.floats(0.0, 2.0), st.floats(0.0, 2.0))
    def test_decreasing_in_cap(self, a, b):
        lo, hi = sorted((a, b))
        v = [caplet_price(B3, CapletSpec(1.0, 2.0, r), C075).value for r in (lo, hi)]
        assert v[1] <= v[0] + 1e-12

    def test_monte_carlo(self, within_3se):
        spec = CapletSpec(1.0, 2.0, 0.2)

        def payoff(states):
            P = bond_price_from_variance(B3, states[0], 0.5625)
            L = (1.0 / P - 1.0) / 1.0
            return spec.X * np.maximum(L - spec.R, 0.0)

        est = price_path_claim(B3, C075, payoff, [1.0, 2.0], 200_000, RngStream(5))
        within_3se(est.mean, est.std_err, caplet_price(B3, spec, C075).value)

    def test_model_check(self):
        with pytest.raises(UnsupportedModelError):
            caplet_price(B4, CapletSpec(1.0, 2.0, 0.1), C075)


class TestBessel4Options:
    @pytest.mark.parametrize("K", [0.3, 0.5, 0.7])
    @pytest.mark.parametrize("method", ["quadrature", "series(20)"])
    def test_parity(self, K, method):
        call = BondOptionSpec(1.0, 2.0, K, "call")
        put = BondOptionSpec(1.0, 2.0, K, "put")
        P = lambda u: bond_price(B4, initial_state(B4), C06, u)  # noqa: E731
        c = bond_call_b4(call, C06, method).value
        p = bond_put_b4(put, C06, method).value
        assert abs(c - p - (P(2.0) - K * P(1.0))) <= 1e-10

    @pytest.mark.parametrize("K", [0.1, 0.3, 0.5, 0.7, 0.95])
    @pytest.mark.parametrize("kind", ["call", "put"])
    def test_series_vs_quadrature(self, K, kind):
        spec = BondOptionSpec(1.0, 2.0, K, kind)
        fn = bond_call_b4 if kind == "call" else bond_put_b4
        assert fn(spec, C06, "series(20)").value == pytest.approx(fn(spec, C06, "quadrature").value, abs=1e-10)

    @pytest.mark.parametrize("K", [0.3, 0.7])
    def test_radial_oracle(self, K):
        spec = BondOptionSpec(1.0, 2.0, K)
        ref = radial_expectation(4, 0.36, lambda r: max(-math.expm1(-r * r / 0.72) - K, 0.0))
        assert bond_call_b4(spec, C06).value == pytest.approx(ref, abs=1e-9)

    @given(st.floats(0.02, 0.98), st.floats(0.02, 0.98))
    def test_monotone_in_strike(self, a, b):
        lo, hi = sorted((a, b))
        c = [bond_call_b4(BondOptionSpec(1.0, 2.0, k), C06, "series").value for k in (lo, hi)]
        p = [bond_put_b4(BondOptionSpec(1.0, 2.0, k, "put"), C06, "series").value for k in (lo, hi)]
        assert c[1] <= c[0] + 1e-14 and p[0] <= p[1] + 1e-14
        assert c[0] >= 0 and p[0] >= 0

    def test_series_label_reports_terms(self):
        q = bond_call_b4(BondOptionSpec(1.0, 2.0, 0.5), C06, "series(3)")
        assert q.method.startswith("series(") and int(q.method[7:-1]) >= 3

    def test_series_divergence(self):
        # a tiny variance to expiry puts the Poisson mass far beyond the cap
        spec = BondOptionSpec(0.001, 2.0, 0.5)
        with pytest.raises(SeriesDivergenceError) as exc:
            bond_call_b4(spec, VolatilityCurve.constant(0.05), "series(5)")
        assert exc.value.best_estimate == 0.0

    def test_quadrature_resolves_narrow_density(self):
        # xi_t is pinned near 1, where P_tT is essentially 1
        curve = VolatilityCurve.constant(0.05)
        spec = BondOptionSpec(0.001, 2.0, 0.5)
        P = lambda u: bond_price(B4, initial_state(B4), curve, u)  # noqa: E731
        assert bond_call_b4(spec, curve).value == pytest.approx(P(2.0) - 0.5 * P(0.001), rel=1e-9)

    def test_series_error_estimate(self):
        q = bond_call_b4(BondOptionSpec(1.0, 2.0, 0.5), C06, "series(20)")
        assert 0 <= q.err_est <= 1e-16 * q.value

    @pytest.mark.parametrize("method", ["binomial", "series(x)"])
    def test_bad_method(self, method):
        with pytest.raises((DomainError, ValueError)):
            bond_call_b4(BondOptionSpec(1.0, 2.0, 0.5), C06, method)

    def test_kind_and_model_checks(self):
        with pytest.raises(DomainError):
            bond_call_b4(BondOptionSpec(1.0, 2.0, 0.5, "put"), C06)
        with pytest.raises(UnsupportedModelError):
            bond_put_b4(BondOptionSpec(1.0, 2.0, 0.5, "put"), C06, model=B3)

    def test_monte_carlo(self, within_3se):
        spec = BondOptionSpec(1.0, 2.0, 0.5)
        S = 0.36

        def payoff(X):
            return np.maximum(bond_price_from_variance(B4, X, S) - 0.5, 0.0)

        est = price_claim(B4, C06, payoff, 1.0, 100_000, RngStream(9), vectorized=True)
        within_3se(est.mean, est.std_err, bond_call_b4(spec, C06).value)

    def test_quadrature_matches_scipy_bessel(self):
        # the radial density of xi_t uses exponentially scaled I_1
        S0t, x = 0.36, 1.7
        dens = x * x / S0t * special.ive(1, x / S0t) * math.exp(-((x - 1) ** 2) / (2 * S0t))
        law = stats.ncx2(df=4, nc=1 / S0t, scale=S0t)
        assert dens == pytest.approx(law.pdf(x * x) * 2 * x, rel=1e-10)


class TestInstrumentParsing:
    def test_caplet(self):
        kind, spec = instrument_from_dict({"kind": "caplet", "t": 1, "T": 2, "R": 0.2})
        assert kind == "caplet" and spec == CapletSpec(1.0, 2.0, 0.2, 1.0)

    @pytest.mark.parametrize("kind, opt", [("digital", "digital-call"), ("bond-call", "call"), ("bond-put", "put")])
    def test_options(self, kind, opt):
        _, spec = instrument_from_dict({"kind": kind, "t": 1, "T": 2, "K": 0.5})
        assert spec.kind == opt

    def test_fx_passthrough(self):
        data = {"kind": "fx-crypto-usd", "T": 1, "K": 1.0}
        assert instrument_from_dict(data) == ("fx-crypto-usd", data)

    @pytest.mark.parametrize("data", [{}, {"kind": "swaption"}, {"kind": "caplet", "t": 1}, []])
    def test_bad(self, data):
        with pytest.raises(DomainError):
            instrument_from_dict(data)
