"""Bond options and caplets.

Bessel(3): digital calls on discount bonds and in-arrears caplets.
Bessel(4): European calls and puts on discount bonds, by radial quadrature
or by an incomplete-gamma series.

Every price is in currency units at the valuation time. It is the deflated
expectation divided by the kernel value then.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import DomainError, SeriesDivergenceError, UnsupportedModelError
from .kernels import Bessel3, Bessel4, BesselN, initial_state
from .numerics import (
    QuadratureSpec,
    bessel_i_scaled,
    erf,
    erf_inv,
    erfc,
    integrate,
    regularized_lower_gamma_int,
    regularized_upper_gamma_int,
)
from .stochastic import VolatilityCurve, accumulated_variance

__all__ = [
    "CapletSpec",
    "BondOptionSpec",
    "PriceQuote",
    "simple_rate",
    "strike_notional",
    "critical_numeraire",
    "digital_call_price",
    "caplet_price",
    "caplet_price_expansion",
    "bond_call_b4",
    "bond_put_b4",
    "instrument_from_dict",
    "DEFAULT_K_MAX",
    "MAX_K_MAX",
]

DEFAULT_K_MAX = 20
MAX_K_MAX = 60
SERIES_REL_TOL = 1e-16
SERIES_ABS_TOL = 1e-300
# the radial density is below 1e-30 past xi* + 12 sqrt(Sigma_0t) + 1
TAIL_SIGMAS = 12.0

_QUAD = QuadratureSpec(0.0, 1.0, abs_tol=1e-14, rel_tol=1e-12, max_subdivisions=2000)


@dataclass(frozen=True)
class CapletSpec:
    """In-arrears caplet paying ``X (L_{tT} - R)^+`` at ``T``, fixed at ``t``."""

    t: float
    T: float
    R: float
    X: float = 1.0

    def __post_init__(self):
        if not (0 < self.t < self.T):
            raise DomainError(f"caplet needs 0 < t < T, got t={self.t}, T={self.T}")
        if not self.R >= 0:
            raise DomainError("cap rate must be >= 0")
        if not self.X > 0:
            raise DomainError("notional must be > 0")


@dataclass(frozen=True)
class BondOptionSpec:
    """European option expiring at ``t`` on the bond maturing at ``T``."""

    t: float
    T: float
    K: float
    kind: str = "call"

    def __post_init__(self):
        if not (0 < self.t < self.T):
            raise DomainError(f"bond option needs 0 < t < T, got t={self.t}, T={self.T}")
        if not (0 < self.K < 1):
            raise DomainError(f"strike must lie in (0, 1), got {self.K}")
        if self.kind not in ("call", "put", "digital-call"):
            raise DomainError(f"unknown option kind {self.kind!r}")


@dataclass(frozen=True)
class PriceQuote:
    value: float
    method: str
    err_est: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def simple_rate(P_tT, tenor):
    """Simple term rate ``(1/P - 1) / tenor``.

    >>> simple_rate(0.8, 0.5)
    0.5
    """
    P = np.asarray(P_tT, dtype=float)
    if np.any(P <= 0) or np.any(P > 1):
        raise DomainError("bond price must lie in (0, 1]")
    if not np.all(np.asarray(tenor) > 0):
        raise DomainError("tenor must be > 0")
    out = (1.0 / P - 1.0) / tenor
    return float(out) if np.ndim(out) == 0 else out


def strike_notional(spec: CapletSpec) -> tuple[float, float]:
    """Bond-put strike ``K`` and notional ``N`` replicating the caplet."""
    tau = spec.T - spec.t
    growth = 1.0 + spec.R * tau
    return 1.0 / growth, spec.X * growth / tau


def _order(model) -> int:
    if isinstance(model, BesselN) and model.order in (3, 4):
        return model.order
    raise UnsupportedModelError(f"no critical numeraire for {model!r}")


def critical_numeraire(model, spec: BondOptionSpec, curve: VolatilityCurve) -> float:
    """Numeraire level at expiry above which ``P_{tT} > K``."""
    if not (0 < spec.K < 1):
        raise DomainError("strike must lie in (0, 1)")
    S = accumulated_variance(curve, spec.t, spec.T)
    if _order(model) == 3:
        return math.sqrt(2.0 * S) * float(erf_inv(spec.K))
    return math.sqrt(-2.0 * S * math.log1p(-spec.K))


def _xi_crit(model, K, t, T, curve):
    """Critical numeraire extended to ``K = 0`` (0) and ``K = 1`` (inf)."""
    if K <= 0:
        return 0.0
    if K >= 1:
        return math.inf
    return critical_numeraire(model, BondOptionSpec(t, T, K), curve)


def digital_call_price(model, state, spec: BondOptionSpec, curve: VolatilityCurve) -> float:
    """Bessel(3) digital paying one unit at ``t`` if ``P_{tT} > K``.

    At state time ``s`` with numeraire ``xi_s``::

        D_s = (erf((xi* + xi_s)/sqrt(2 S)) - erf((xi* - xi_s)/sqrt(2 S))) / 2

    with ``S = Sigma_{st}``. ``state=None`` means the time-0 state.
    """
    if not isinstance(model, Bessel3):
        raise UnsupportedModelError("digital calls are priced for Bessel(3) only")
    state = initial_state(model) if state is None else state
    s, xi = state.time, state.xi
    if s >= spec.t:
        raise DomainError(f"valuation time {s} must precede expiry {spec.t}")
    xs = _xi_crit(model, spec.K, spec.t, spec.T, curve)
    root = math.sqrt(2.0 * accumulated_variance(curve, s, spec.t))
    if xs == math.inf:
        return 0.0
    # erfc differences avoid cancellation when both arguments are large
    return 0.5 * (float(erfc((xs - xi) / root)) - float(erfc((xs + xi) / root)))


def _peak_points(S0t):
    # the radial law of xi_t is concentrated near 1 when S0t is small
    r = math.sqrt(S0t)
    return [1.0 + k * r for k in (-8.0, -2.0, 0.0, 2.0, 8.0)]


def _radial_b3(x, S0t):
    # density of xi_t times pi_t, started at xi_0 = 1
    return np.exp(-((x - 1.0) ** 2) / (2.0 * S0t)) * -np.expm1(-2.0 * x / S0t) / math.sqrt(
        2.0 * math.pi * S0t
    )


def caplet_price(model, spec: CapletSpec, curve: VolatilityCurve, *, quad: QuadratureSpec = _QUAD) -> PriceQuote:
    """Bessel(3) in-arrears caplet at time 0, as ``N`` bond puts struck at ``K``.

    ``N int_0^{xi*} (K - erf(x/sqrt(2 S_tT))) rho(x) dx`` where ``rho`` is
    the radial density of ``xi_t`` weighted by ``pi_t``. A zero cap rate
    gives ``X (P_0t - P_0T) / (T - t)``.
    """
    if not isinstance(model, Bessel3):
        raise UnsupportedModelError("caplets are priced for Bessel(3) only")
    K, N = strike_notional(spec)
    S0t = accumulated_variance(curve, 0.0, spec.t)
    StT = accumulated_variance(curve, spec.t, spec.T)
    xs = _xi_crit(model, K, spec.t, spec.T, curve)
    upper = min(xs, 2.0 + TAIL_SIGMAS * math.sqrt(S0t))
    if upper <= 0:
        return PriceQuote(0.0, "quadrature", 0.0)
    root = math.sqrt(2.0 * StT)

    def f(x):
        return ((K - 1.0) + erfc(x / root)) * _radial_b3(x, S0t)

    val, err = integrate(
        f, QuadratureSpec(0.0, upper, quad.abs_tol, quad.rel_tol, quad.max_subdivisions), _peak_points(S0t)
    )
    return PriceQuote(N * max(val, 0.0), "quadrature", N * err)


def caplet_price_expansion(model, spec: CapletSpec, curve: VolatilityCurve) -> float:
    """Caplet price from the two Gaussian-erf integrals plus the erf term.

    Independent of :func:`caplet_price` up to the change of variables; kept
    as a cross-check.
    """
    if not isinstance(model, Bessel3):
        raise UnsupportedModelError("caplets are priced for Bessel(3) only")
    K, N = strike_notional(spec)
    S0t = accumulated_variance(curve, 0.0, spec.t)
    StT = accumulated_variance(curve, spec.t, spec.T)
    xs = _xi_crit(model, K, spec.t, spec.T, curve)
    a, b = math.sqrt(2.0 * S0t), math.sqrt(2.0 * StT)
    rp = 1.0 / math.sqrt(math.pi)

    def g_plus(u):
        return rp * np.exp(-u * u) * erf((a * u - 1.0) / b)

    def g_minus(u):
        return rp * np.exp(-u * u) * erf((a * u + 1.0) / b)

    I1, _ = integrate(g_plus, QuadratureSpec(1.0 / a, (xs + 1.0) / a, 1e-15, 1e-13))
    I2, _ = integrate(g_minus, QuadratureSpec(-1.0 / a, (xs - 1.0) / a, 1e-15, 1e-13))
    if xs == math.inf:
        bracket = float(erf(1.0 / a))
    else:
        bracket = float(erf(1.0 / a)) - 0.5 * (float(erf((xs + 1.0) / a)) - float(erf((xs - 1.0) / a)))
    return N * (I1 - I2 + K * bracket)


# --- Bessel(4) bond options ---------------------------------------------


def _check_b4(model, spec, kind):
    if model is not None and not (isinstance(model, BesselN) and model.order == 4):
        raise UnsupportedModelError("bond calls and puts are priced for Bessel(4) only")
    if spec.kind != kind:
        raise DomainError(f"expected a {kind} spec, got {spec.kind!r}")


def _parse_method(method) -> tuple[str, int]:
    if isinstance(method, tuple):
        name, k = method
        return name, int(k)
    m = str(method).strip().lower()
    if m == "quadrature":
        return "quadrature", 0
    if m == "series":
        return "series", DEFAULT_K_MAX
    if m.startswith("series(") and m.endswith(")"):
        return "series", int(m[7:-1])
    raise DomainError(f"unknown method {method!r}; use 'quadrature' or 'series(k_max)'")


def _b4_quadrature(spec, curve, put: bool, quad: QuadratureSpec) -> PriceQuote:
    S0t = accumulated_variance(curve, 0.0, spec.t)
    StT = accumulated_variance(curve, spec.t, spec.T)
    xs = critical_numeraire(Bessel4(), spec, curve)
    K = spec.K

    def f(x):
        kernel = bessel_i_scaled(1, x / S0t) * np.exp(-((x - 1.0) ** 2) / (2.0 * S0t)) / S0t
        if put:
            return ((K - 1.0) + np.exp(-x * x / (2.0 * StT))) * kernel
        return ((1.0 - K) - np.exp(-x * x / (2.0 * StT))) * kernel

    lo, hi = (0.0, xs) if put else (xs, xs + TAIL_SIGMAS * math.sqrt(S0t) + 1.0)
    if hi <= lo:
        return PriceQuote(0.0, "quadrature", 0.0)
    val, err = integrate(
        f, QuadratureSpec(lo, hi, quad.abs_tol, quad.rel_tol, quad.max_subdivisions), _peak_points(S0t)
    )
    return PriceQuote(max(val, 0.0), "quadrature", err)


def _b4_series(spec, curve, put: bool, k_max: int) -> PriceQuote:
    if k_max < 1:
        raise DomainError("k_max must be >= 1")
    S0t = accumulated_variance(curve, 0.0, spec.t)
    StT = accumulated_variance(curve, spec.t, spec.T)
    S0T = S0t + StT
    K = spec.K
    c = 1.0 / (2.0 * S0t)
    L = -math.log1p(-K)
    z1 = StT / S0t * L
    z2 = S0T / S0t * L
    log_r = math.log(StT / S0T)
    gamma = regularized_lower_gamma_int if put else regularized_upper_gamma_int
    sign = -1.0 if put else 1.0

    def term(k):
        # e^{-c} c^{k+1} / (k+1)!  times the regularized gamma bracket
        w = math.exp(-c + (k + 1) * math.log(c) - math.lgamma(k + 2))
        g1 = gamma(k, z1)
        g2 = math.exp((k + 1) * log_r) * gamma(k, z2)
        return w * sign * ((1.0 - K) * g1 - g2)

    def tail(m):
        # Poisson(c) mass carried by terms m, m+1, ...; each bracket is at most 1
        return regularized_lower_gamma_int(m, c)

    terms = [term(k) for k in range(k_max + 1)]
    cap = max(k_max, MAX_K_MAX)

    def unconverged():
        return tail(len(terms)) > max(SERIES_REL_TOL * abs(math.fsum(terms)), SERIES_ABS_TOL)

    while unconverged() and len(terms) <= cap:
        terms.append(term(len(terms)))
    total = math.fsum(terms)
    err = tail(len(terms))
    if unconverged():
        raise SeriesDivergenceError(
            f"Poisson mixture not converged by k={len(terms) - 1} (c={c:.3g}); use quadrature",
            best_estimate=total,
            err_est=err,
        )
    return PriceQuote(max(total, 0.0), f"series({len(terms) - 1})", err)


def bond_call_b4(spec: BondOptionSpec, curve: VolatilityCurve, method="quadrature", *, model=None, quad: QuadratureSpec = _QUAD) -> PriceQuote:
    """Bessel(4) call on the ``T``-bond, expiring at ``t``, priced at time 0.

    ``method="quadrature"`` integrates the radial law of ``xi_t`` (a
    scaled ``I_1`` Bessel density) over ``[xi*, xi* + 12 sqrt(S_0t) + 1]``.
    ``method="series(k)"`` sums the Poisson mixture::

        sum_k e^{-c} c^{k+1}/(k+1)! [(1-K) Q(k+1, z1) - r^{k+1} Q(k+1, z2)]

    where ``c = 1/(2 S_0t)``, ``r = S_tT/S_0T``, ``z1 = -(S_tT/S_0t) log(1-K)``,
    ``z2 = -(S_0T/S_0t) log(1-K)`` and ``Q`` is the regularized upper
    incomplete gamma function. Each bracket is at most 1, so the
    Poisson(c) mass of the omitted terms bounds the truncation error; terms
    past ``k`` (up to 60) are added until that bound is below 1e-16 of the
    sum, and :class:`SeriesDivergenceError` is raised if it never is.
    """
    _check_b4(model, spec, "call")
    name, k = _parse_method(method)
    if name == "quadrature":
        return _b4_quadrature(spec, curve, False, quad)
    return _b4_series(spec, curve, False, k)


def bond_put_b4(spec: BondOptionSpec, curve: VolatilityCurve, method="quadrature", *, model=None, quad: QuadratureSpec = _QUAD) -> PriceQuote:
    """Bessel(4) put on the ``T``-bond; the series uses the lower gamma ``P``::

        sum_k e^{-c} c^{k+1}/(k+1)! [r^{k+1} P(k+1, z2) - (1-K) P(k+1, z1)]
    """
    _check_b4(model, spec, "put")
    name, k = _parse_method(method)
    if name == "quadrature":
        return _b4_quadrature(spec, curve, True, quad)
    return _b4_series(spec, curve, True, k)


def instrument_from_dict(data: dict):
    """Parse instrument JSON such as ``{"kind": "caplet", "t": 1, "T": 2, "R": 0.2, "X": 1}``.

    Returns ``(kind, spec_or_dict)``. Bond-option kinds map onto
    :class:`BondOptionSpec`; FX kinds are returned unchanged for
    :mod:`cryptorates.fx`.
    """
    if not isinstance(data, dict) or "kind" not in data:
        raise DomainError("instrument JSON needs a 'kind'")
    kind = data["kind"]
    try:
        if kind == "caplet":
            return kind, CapletSpec(float(data["t"]), float(data["T"]), float(data.get("R", 0.0)), float(data.get("X", 1.0)))
        if kind in ("digital", "bond-call", "bond-put"):
            opt = {"digital": "digital-call", "bond-call": "call", "bond-put": "put"}[kind]
            return kind, BondOptionSpec(float(data["t"]), float(data["T"]), float(data["K"]), opt)
    except KeyError as exc:
        raise DomainError(f"instrument {kind!r} is missing field {exc.args[0]!r}") from exc
    if kind in ("fx-crypto-crypto", "fx-crypto-usd"):
        return kind, dict(data)
    raise DomainError(f"unknown instrument kind {kind!r}")
