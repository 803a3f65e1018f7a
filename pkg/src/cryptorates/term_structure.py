"""Discount bonds, forward rates, yields and calibration.

Closed forms are available for the Bessel(3), Bessel(4) and complexified
Bessel(3) kernels. Higher orders only have the Monte Carlo route
(:mod:`cryptorates.mc_oracle`).

Conventions
-----------
* ``state`` is a :class:`FactorState`, or a raw offsets array together with
  the keyword ``t`` (default 0).
* Instantaneous rates use the volatility on ``[T, next knot)`` at a knot.
* Forward rates keep the factor ``xi_t`` in front of the Gaussian term, so
  they are exact at every state and not only at ``xi_t = 1``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    CalibrationError,
    ConstraintError,
    ConvergenceError,
    DomainError,
    UnsupportedModelError,
)
from .kernels import (
    BesselN,
    ComplexBessel3,
    complex_kernel_value,
    initial_state,
    natural_numeraire,
    omega,
)
from .numerics import QuadratureSpec, erf, erf_inv, erfc, integrate
from .stochastic import FactorState, VolatilityCurve, accumulated_variance

__all__ = [
    "YieldPoint",
    "complex_erf",
    "bond_price",
    "bond_price_from_variance",
    "forward_rate",
    "short_rate",
    "short_rate_prelimit",
    "yield_curve",
    "bond_volatility",
    "calibrate_bessel3",
    "calibrate_bessel4",
    "bessel4_curve",
    "martingale_identity_lhs",
]

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_RING_GUARD = 1e-12


@dataclass(frozen=True)
class YieldPoint:
    """Continuously compounded yield ``rate`` quoted for ``maturity``."""

    maturity: float
    rate: float

    def __post_init__(self):
        if not self.maturity > 0:
            raise DomainError(f"maturity must be > 0, got {self.maturity!r}")
        if not math.isfinite(self.rate):
            raise DomainError("yield must be finite")
        p = math.exp(-self.maturity * self.rate)
        if not 0.0 < p < 1.0:
            raise CalibrationError(
                f"implied bond price {p!r} at T={self.maturity} is outside (0, 1)",
                maturity=self.maturity,
            )

    @property
    def bond_price(self) -> float:
        return math.exp(-self.maturity * self.rate)


# --- erf of a complex argument ------------------------------------------


def _erf_series(z: complex) -> complex:
    z2 = z * z
    term = z
    total = z
    n = 0
    limit = abs(z2)
    while True:
        n += 1
        term *= -z2 / n
        add = term / (2 * n + 1)
        total += add
        if abs(add) <= 1e-17 * abs(total) and n > limit:
            break
        if n > 5000:
            raise ConvergenceError("erf series did not converge", best_estimate=0.0)
    return 2.0 / _SQRT_PI * total


def _erfc_cf(z: complex) -> complex:
    # erfc(z) = exp(-z^2)/sqrt(pi) / (z + (1/2)/(z + 1/(z + (3/2)/(z + ...)))), Re z > 0
    tiny = 1e-300
    f = z
    C = z
    D = 0.0
    for k in range(1, 50000):
        a = 0.5 * k
        D = z + a * D
        D = tiny if D == 0 else D
        C = z + a / C
        C = tiny if C == 0 else C
        D = 1.0 / D
        delta = C * D
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            return cmath.exp(-z * z) / (_SQRT_PI * f)
    raise ConvergenceError("erfc continued fraction did not converge")


def _complex_erf_scalar(z: complex) -> complex:
    z = complex(z)
    if z.real < 0:
        return -_complex_erf_scalar(-z)
    # the series loses about exp(2 Re(z)^2) to cancellation
    if abs(z) <= 3.0 or (z.real <= 1.5 and abs(z) <= 12.0):
        return _erf_series(z)
    return 1.0 - _erfc_cf(z)


def complex_erf(z):
    """Error function of a complex argument.

    Maclaurin series (erf is entire) for ``|z| <= 3`` and near the imaginary
    axis; otherwise ``1 - erfc(z)`` with ``erfc`` from its Laplace continued
    fraction, evaluated by the modified Lentz method. Odd symmetry covers the
    left half-plane.
    """
    if np.ndim(z) == 0:
        return _complex_erf_scalar(complex(z))
    return np.vectorize(_complex_erf_scalar, otypes=[complex])(np.asarray(z, dtype=complex))


# --- helpers --------------------------------------------------------------


def _split_state(state, t):
    if isinstance(state, FactorState):
        return state.time, state
    return (0.0 if t is None else float(t)), np.asarray(state, dtype=float)


def _out(arr):
    arr = np.asarray(arr)
    return arr.item() if arr.ndim == 0 else arr


def _closed_form_order(model):
    if isinstance(model, ComplexBessel3):
        return "complex"
    if isinstance(model, BesselN):
        if model.order in (3, 4):
            return model.order
        raise UnsupportedModelError(
            f"no closed-form term structure for Bessel({model.order}); use the Monte Carlo oracle"
        )
    raise UnsupportedModelError(f"no term structure for {type(model).__name__}")


# --- bond prices -----------------------------------------------------------


def bond_price_from_variance(model, state, variance):
    """Bond price as a function of the offsets and ``Sigma_{tT}`` directly.

    ``variance`` may be an array broadcasting against the state's leading
    dimensions. Zero variance gives exactly 1.
    """
    kind = _closed_form_order(model)
    S = np.asarray(variance, dtype=float)
    if np.any(S < 0):
        raise DomainError("accumulated variance must be >= 0")
    pos = S > 0
    S_safe = np.where(pos, S, 1.0)
    if kind == "complex":
        w = np.asarray(omega(model, state), dtype=complex)
        u = np.asarray(complex_kernel_value(model, state))
        re_u = u.real
        if np.any(re_u <= _RING_GUARD):
            raise DomainError("Re(1/omega) too small to normalise the bond price")
        val = (u * complex_erf(w / np.sqrt(2.0 * S_safe))).real / re_u
    else:
        xi = np.asarray(natural_numeraire(model, state))
        if kind == 3:
            val = erf(xi / np.sqrt(2.0 * S_safe))
        else:
            val = -np.expm1(-xi * xi / (2.0 * S_safe))
    return _out(np.where(pos, val, 1.0))


def bond_price(model, state, curve: VolatilityCurve, T, *, t=None):
    """Discount bond price ``P_{tT}``.

    * Bessel(3): ``erf(xi_t / sqrt(2 Sigma_{tT}))``
    * Bessel(4): ``1 - exp(-xi_t^2 / (2 Sigma_{tT}))``
    * complex Bessel(3): ``Re(erf(omega_t/sqrt(2 Sigma))/omega_t) / Re(1/omega_t)``

    The complex formula continues the real result analytically in the
    centre. Its Monte Carlo counterpart, the expectation of ``Re(1/omega)``
    with the principal branch, agrees only while the branch disk
    ``{xi . delta = 0, |xi| < |delta|}`` is rarely reached, i.e. for small
    ``|delta|`` relative to ``sqrt(Sigma)``.

    Examples
    --------
    >>> from cryptorates import Bessel3, VolatilityCurve, initial_state
    >>> m = Bessel3()
    >>> round(bond_price(m, initial_state(m), VolatilityCurve.constant(0.75), 2.0), 4)
    0.6542
    """
    t0, st = _split_state(state, t)
    S = accumulated_variance(curve, t0, T)
    return bond_price_from_variance(model, st, S)


def _forward_from_variance(model, st, S, sig2):
    kind = _closed_form_order(model)
    S = np.asarray(S, dtype=float)
    if kind == "complex":
        w = np.asarray(omega(model, st), dtype=complex)
        re_u = np.asarray(complex_kernel_value(model, st)).real
        P = np.asarray(bond_price_from_variance(model, st, S))
        num = (np.exp(-w * w / (2.0 * S))).real
        return sig2 * num / (_SQRT_2PI * S**1.5 * re_u * P)
    xi = np.asarray(natural_numeraire(model, st))
    x = xi * xi / (2.0 * S)
    if kind == 3:
        # erf(a) = 1 - erfc(a) keeps precision when P is close to 1
        P = 1.0 - erfc(np.sqrt(x))
        return xi * sig2 * np.exp(-x - 1.5 * np.log(S)) / (_SQRT_2PI * P)
    with np.errstate(over="ignore"):
        return sig2 * xi * xi / (2.0 * S * S * np.expm1(x))


def forward_rate(model, state, curve: VolatilityCurve, T, *, t=None):
    """Instantaneous forward rate ``f_{tT} = -d log P_{tT} / dT``.

    Bessel(3): ``xi sigma_T^2 exp(-xi^2/2S) / (sqrt(2 pi) S^{3/2} P)``;
    Bessel(4): ``sigma_T^2 xi^2 / (2 S^2 (exp(xi^2/2S) - 1))``, with
    ``S = Sigma_{tT}``. Tends to 0 as ``T -> t``.

    Raises
    ------
    DomainError
        If ``T <= t``.
    """
    t0, st = _split_state(state, t)
    T_arr = np.asarray(T, dtype=float)
    if np.any(T_arr <= t0):
        raise DomainError(f"forward rates need T > t (t={t0})")
    S = accumulated_variance(curve, t0, T_arr)
    sig2 = np.asarray(curve.sigma(T_arr, side="right")) ** 2
    return _out(_forward_from_variance(model, st, S, sig2))


def short_rate(model, state=None) -> float:
    """The short rate. Identically zero for every kernel implemented here:
    each kernel is driftless, so nothing in ``d pi_t`` pays interest."""
    _closed_form_order(model) if not isinstance(model, BesselN) else None
    return 0.0


def short_rate_prelimit(model, state, curve: VolatilityCurve, tau, *, t=None, log=False):
    """``-dP_{tT}/dT`` evaluated at ``T = t + tau``; its ``tau -> 0`` limit is
    the short rate.

    Bessel(3): ``xi sigma^2 exp(-xi^2/2S) / (sqrt(2 pi) S^{3/2})``;
    Bessel(4): ``sigma^2 xi^2 exp(-xi^2/2S) / (2 S^2)``. With ``log=True``
    the natural logarithm is returned, which stays finite long after the
    value itself underflows.
    """
    kind = _closed_form_order(model)
    if kind == "complex":
        raise UnsupportedModelError("pre-limit short rate is given for the real models only")
    t0, st = _split_state(state, t)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("tau must be > 0")
    S = accumulated_variance(curve, t0, t0 + tau)
    sig2 = np.asarray(curve.sigma(t0 + tau, side="right")) ** 2
    xi = np.asarray(natural_numeraire(model, st))
    x = xi * xi / (2.0 * S)
    if kind == 3:
        logv = np.log(xi * sig2 / _SQRT_2PI) - 1.5 * np.log(S) - x
    else:
        logv = np.log(sig2 * xi * xi / 2.0) - 2.0 * np.log(S) - x
    return _out(logv if log else np.exp(logv))


def yield_curve(model, curve: VolatilityCurve, T):
    """Initial yield ``Y(T) = -log(P_{0T}) / T`` from the time-0 state.

    Raises
    ------
    DomainError
        If any ``T <= 0``.
    """
    T_arr = np.asarray(T, dtype=float)
    if np.any(T_arr <= 0):
        raise DomainError("yields need T > 0")
    kind = _closed_form_order(model)
    state = initial_state(model)
    S = np.asarray(curve.variance_to(T_arr))
    if kind == "complex":
        logp = np.log(np.asarray(bond_price_from_variance(model, state, S)))
    else:
        x = state.xi**2 / (2.0 * S)
        if kind == 3:
            logp = np.log1p(-erfc(np.sqrt(x)))
        else:
            logp = np.log1p(-np.exp(-x))
    return _out(-logp / T_arr)


def bond_volatility(model, state, curve: VolatilityCurve, T, *, t=None):
    """Bond volatility ``Omega_{tT}`` in ``dP = lambda Omega P dt + Omega P dW``.

    Bessel(3): ``2 sigma_t exp(-xi^2/2S) / (P sqrt(2 pi S))``;
    Bessel(4): ``sigma_t xi exp(-xi^2/2S) / (P S)``.
    """
    kind = _closed_form_order(model)
    if kind == "complex":
        raise UnsupportedModelError("bond volatility is given for the real models only")
    t0, st = _split_state(state, t)
    T_arr = np.asarray(T, dtype=float)
    if np.any(T_arr <= t0):
        raise DomainError(f"bond volatility needs T > t (t={t0})")
    S = accumulated_variance(curve, t0, T_arr)
    sig = curve.sigma(t0, side="right")
    xi = np.asarray(natural_numeraire(model, st))
    x = xi * xi / (2.0 * S)
    P = np.asarray(bond_price_from_variance(model, st, S))
    if kind == 3:
        out = 2.0 * sig * np.exp(-x) / (P * np.sqrt(2.0 * math.pi * S))
    else:
        out = sig * xi * np.exp(-x) / (P * S)
    return _out(out)


# --- calibration -----------------------------------------------------------


def _as_points(points) -> list[YieldPoint]:
    out = []
    for p in points:
        out.append(p if isinstance(p, YieldPoint) else YieldPoint(float(p[0]), float(p[1])))
    return out


def calibrate_bessel3(points: Iterable) -> VolatilityCurve:
    """Invert yield quotes into a piecewise-constant Bessel(3) volatility curve.

    Each quote fixes ``Sigma*_{0T} = 1 / (2 erfinv(exp(-T Y))^2)``. The
    accumulated variance is interpolated linearly between maturities, so
    ``sigma^2`` is constant on every segment and the input yields are
    reproduced exactly. The last segment's volatility extends beyond the
    final maturity.

    Raises
    ------
    CalibrationError
        If the implied ``Sigma*`` is not strictly increasing (the quotes
        admit arbitrage); ``exc.maturity`` names the first offending one.
    """
    pts = _as_points(points)
    if not pts:
        raise DomainError("need at least one yield point")
    mats = [p.maturity for p in pts]
    if any(b <= a for a, b in zip(mats, mats[1:])):
        raise DomainError("yield points must be sorted by strictly increasing maturity")
    knots = []
    prev_T, prev_S = 0.0, 0.0
    for p in pts:
        s = erf_inv(p.bond_price)
        S = 1.0 / (2.0 * s * s)
        if not S > prev_S:
            raise CalibrationError(
                f"implied accumulated variance not increasing at T={p.maturity} "
                f"({S!r} <= {prev_S!r})",
                maturity=p.maturity,
            )
        knots.append((prev_T, math.sqrt((S - prev_S) / (p.maturity - prev_T))))
        prev_T, prev_S = p.maturity, S
    return VolatilityCurve(tuple(knots))


def calibrate_bessel4(
    maturities: Sequence[float],
    yields: Sequence[float],
    derivatives: Sequence[float],
    *,
    y0_tol: float = 1e-10,
) -> np.ndarray:
    """Volatility ``sigma_T^2`` implied by a Bessel(4) initial yield curve.

    With ``P = exp(-T Y)``, ``sigma_T^2 = dSigma_{0T}/dT`` gives::

        sigma_T^2 = (Y + T Y') P / (2 (1 - P) log(1 - P)^2)

    A sample at ``T = 0`` is read as the constraint ``Y(0) = 0`` and is not
    part of the output, which holds one value per positive maturity.

    Raises
    ------
    ConstraintError
        If a ``T = 0`` sample has ``|Y(0)| > y0_tol``.
    CalibrationError
        If some implied ``sigma_T^2`` is not positive.
    """
    T = np.asarray(maturities, dtype=float)
    Y = np.asarray(yields, dtype=float)
    dY = np.asarray(derivatives, dtype=float)
    if not (T.shape == Y.shape == dY.shape):
        raise DomainError("maturities, yields and derivatives must have the same length")
    if np.any(T < 0):
        raise DomainError("maturities must be >= 0")
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(dY))):
        raise DomainError("yields and derivatives must be finite")
    at0 = T == 0
    if np.any(np.abs(Y[at0]) > y0_tol):
        raise ConstraintError(f"Y(0) must vanish, got {float(Y[at0][0])!r}", maturity=0.0)
    T, Y, dY = T[~at0], Y[~at0], dY[~at0]
    P = np.exp(-T * Y)
    with np.errstate(divide="ignore", invalid="ignore"):
        sig2 = (Y + T * dY) * P / (2.0 * (-np.expm1(-T * Y)) * np.log1p(-P) ** 2)
    bad = ~(sig2 > 0) | ~np.isfinite(sig2)
    if np.any(bad):
        m = float(T[np.argmax(bad)])
        raise CalibrationError(f"non-positive implied sigma^2 at T={m}", maturity=m)
    return sig2


def bessel4_curve(maturities, sigma_sq) -> VolatilityCurve:
    """Piecewise-constant curve taking ``sigma(T_i)`` on ``(T_{i-1}, T_i]``."""
    T = np.asarray(maturities, dtype=float)
    s2 = np.asarray(sigma_sq, dtype=float)
    starts = np.concatenate([[0.0], T[:-1]])
    return VolatilityCurve(tuple(zip(starts.tolist(), np.sqrt(s2).tolist())))


# --- analytic martingale identity ----------------------------------------


def martingale_identity_lhs(x: float, alpha: float, beta: float, spec: QuadratureSpec | None = None):
    """Quadrature of ``int_0^inf (e^{-(s-x)^2/a} - e^{-(s+x)^2/a}) erf(s/sqrt(b)) ds / sqrt(pi a)``.

    The exact value is ``erf(x / sqrt(a + b))``; the identity is what makes
    the deflated Bessel(3) bond price a martingale.
    """
    if not (alpha > 0 and beta > 0):
        raise DomainError("alpha and beta must be > 0")
    spec = spec or QuadratureSpec(0.0, math.inf, abs_tol=1e-14, rel_tol=1e-13)
    c = 1.0 / math.sqrt(math.pi * alpha)
    sb = math.sqrt(beta)

    def f(s):
        gauss = np.exp(-((s - x) ** 2) / alpha) * -np.expm1(-4.0 * s * x / alpha)
        return c * gauss * erf(s / sb)

    return integrate(f, QuadratureSpec(0.0, math.inf, spec.abs_tol, spec.rel_tol, spec.max_subdivisions))
