"""Multi-currency markets: exchange rates as kernel ratios, and FX options.

Each currency ``i`` has a kernel ``pi^i`` driven by its own factor vector.
Component ``k`` of that vector is ``int sigma^i dB . L^i_k``, where ``B`` is
a shared pool of independent Brownian motions and the rows ``L^i_k`` are
orthonormal. Currencies loading on the same pool factor share systematic
risk, and a factor loaded by a single currency is idiosyncratic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .derivatives import PriceQuote
from .exceptions import DegenerateInputError, DomainError, UnsupportedModelError
from .kernels import Bessel3, SovereignGBM, initial_state, model_from_dict, model_to_dict
from .mc_oracle import kernel_values
from .numerics import QuadratureSpec, integrate, normal_cdf
from .stochastic import RngStream, VolatilityCurve
from .term_structure import bond_price

__all__ = [
    "Currency",
    "MultiCurrencyMarket",
    "exchange_rate",
    "sample_joint",
    "crypto_crypto_call_mc",
    "crypto_usd_call",
    "crypto_usd_call_joint_mc",
]

_CHUNK = 8192
_UNIT_TOL = 1e-10


@dataclass(frozen=True)
class Currency:
    """One currency: kernel model, volatility curve, loadings and ``pi_0``.

    ``loadings`` has one row per kernel driver and one column per pool
    factor. The rows must be orthonormal. ``scale`` multiplies the kernel, so ``pi_0 = scale``
    for a model normalised to 1 at time 0.
    """

    name: str
    model: object
    curve: VolatilityCurve
    loadings: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.loadings, dtype=float))
        if L.shape[0] != self.model.dim:
            raise DomainError(f"{self.name}: need {self.model.dim} loading rows, got {L.shape[0]}")
        # orthonormal rows keep the kernel's own drivers independent
        if np.max(np.abs(L @ L.T - np.eye(L.shape[0]))) > _UNIT_TOL:
            raise DomainError(f"{self.name}: loading rows must be orthonormal")
        if not self.scale > 0:
            raise DomainError(f"{self.name}: scale must be > 0")
        L.setflags(write=False)
        object.__setattr__(self, "loadings", L)

    @property
    def initial_kernel(self) -> float:
        return self.scale * float(kernel_values(self.model, initial_state(self.model).vector[None, :])[0][0])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": model_to_dict(self.model),
            "vol": self.curve.to_dict(),
            "loadings": self.loadings.tolist(),
            "scale": self.scale,
        }


@dataclass(frozen=True)
class MultiCurrencyMarket:
    currencies: tuple[Currency, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cur = tuple(self.currencies)
        if not cur:
            raise DomainError("a market needs at least one currency")
        names = [c.name for c in cur]
        if len(set(names)) != len(names):
            raise DomainError("currency names must be unique")
        widths = {c.loadings.shape[1] for c in cur}
        if len(widths) != 1:
            raise DomainError("all loadings must address the same factor pool")
        object.__setattr__(self, "currencies", cur)
        object.__setattr__(self, "_index", {c.name: c for c in cur})

    @property
    def n_factors(self) -> int:
        return self.currencies[0].loadings.shape[1]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.currencies]

    def __getitem__(self, name: str) -> Currency:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown currency {name!r}") from None

    @classmethod
    def independent(cls, specs) -> "MultiCurrencyMarket":
        """Market whose currencies share no factors; ``specs`` are
        ``(name, model, curve)`` or ``(name, model, curve, scale)`` tuples."""
        specs = list(specs)
        total = sum(s[1].dim for s in specs)
        out, col = [], 0
        for s in specs:
            L = np.zeros((s[1].dim, total))
            L[np.arange(s[1].dim), col + np.arange(s[1].dim)] = 1.0
            col += s[1].dim
            out.append(Currency(s[0], s[1], s[2], L, *(s[3:4])))
        return cls(tuple(out))

    def to_dict(self) -> dict:
        return {"currencies": [c.to_dict() for c in self.currencies]}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "MultiCurrencyMarket":
        try:
            items = data["currencies"]
            return cls(
                tuple(
                    Currency(
                        c["name"],
                        model_from_dict(c["model"]),
                        VolatilityCurve.from_dict(c["vol"]),
                        np.asarray(c["loadings"], dtype=float),
                        float(c.get("scale", 1.0)),
                    )
                    for c in items
                )
            )
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed market config: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "MultiCurrencyMarket":
        return cls.from_dict(json.loads(text))


def exchange_rate(market: MultiCurrencyMarket, i: str, j: str, joint_state):
    """``S^{ij} = pi^i / pi^j``: units of ``j`` per unit of ``i``.

    ``joint_state`` maps currency names to offsets (one vector or a batch).
    """
    ci, cj = market[i], market[j]
    num = _pi(ci, joint_state[i])
    den = _pi(cj, joint_state[j])
    out = num / den
    return float(out[0]) if np.ndim(joint_state[i]) == 1 else out


def _pi(cur: Currency, offsets) -> np.ndarray:
    X = np.atleast_2d(np.asarray(offsets, dtype=float))
    vals, bad = kernel_values(cur.model, X)
    if np.any(bad) or np.any(vals <= 0):
        raise DomainError(f"kernel of {cur.name} is singular at the given state")
    return cur.scale * vals


def _merged_grid(market, T):
    times = {0.0, float(T)}
    for c in market.currencies:
        times.update(float(t) for t in c.curve.times if t < T)
    return np.array(sorted(times))


def sample_joint(market: MultiCurrencyMarket, T: float, n: int, rng: RngStream) -> dict:
    """Exact joint draw of every currency's offsets at ``T``; ``{name: (n, d)}``.

    Pool increments are drawn on the union of all knot grids, on which every
    volatility curve is constant.
    """
    if not T > 0:
        raise DomainError("T must be > 0")
    grid = _merged_grid(market, T)
    dt = np.diff(grid)
    dB = rng.standard_normal((n, dt.size, market.n_factors)) * np.sqrt(dt)[None, :, None]
    out = {}
    for c in market.currencies:
        sig = np.asarray(c.curve.sigma(grid[1:], side="left"))
        integrated = np.einsum("s,nsf->nf", sig, dB)
        out[c.name] = initial_state(c.model).vector + integrated @ c.loadings.T
    return out


def _joint_kernels(market, T, n, rng):
    draws = sample_joint(market, T, n, rng)
    pis = {}
    bad = np.zeros(n, dtype=bool)
    for c in market.currencies:
        vals, b = kernel_values(c.model, draws[c.name])
        pis[c.name] = c.scale * vals
        bad |= b
    return pis, bad, draws


def crypto_crypto_call_mc(
    market: MultiCurrencyMarket,
    i: str,
    j: str,
    T: float,
    K: float,
    n_samples: int = 100_000,
    rng: RngStream | None = None,
) -> PriceQuote:
    """Call on ``S^{ij}`` struck at ``K``, in units of ``j`` at time 0.

    Monte Carlo mean of ``(pi_T^i - K pi_T^j)^+ / pi_0^j`` over exact joint
    draws. Singular draws are discarded and replaced from the advanced
    stream; ``err_est`` is one standard error.
    """
    if K < 0:
        raise DomainError("strike must be >= 0")
    n = int(n_samples)
    if n < 2:
        raise DomainError("n_samples must be >= 2")
    rng = rng or RngStream()
    ci, cj = market[i], market[j]
    chunks = []
    for b, start in enumerate(range(0, n, _CHUNK)):
        size = min(_CHUNK, n - start)
        sub = rng.substream(b)
        vals = np.empty(0)
        for _ in range(100):
            pis, bad, _ = _joint_kernels(market, T, size - vals.size, sub)
            pay = np.maximum(pis[ci.name] - K * pis[cj.name], 0.0)[~bad]
            vals = np.concatenate([vals, pay])
            if vals.size == size:
                break
        else:
            raise DegenerateInputError("could not draw non-singular joint states")
        chunks.append(vals)
    x = np.concatenate(chunks) / cj.initial_kernel
    return PriceQuote(float(np.mean(x)), "mc", float(np.std(x, ddof=1) / math.sqrt(n)))


def _usd_inner(pi_b, K, usd: SovereignGBM, T):
    """``E[(pi_b - K pi_T^$)^+ | pi_b]`` over the dollar Brownian motion."""
    p0, r, lam = usd.initial, usd.short_rate, usd.risk_premium
    disc = K * p0 * math.exp(-r * T)
    if K == 0:
        return pi_b
    if lam == 0:
        return np.maximum(pi_b - disc, 0.0)
    s = lam * math.sqrt(T)
    with np.errstate(divide="ignore"):
        lg = np.log(pi_b) - math.log(K * p0) + r * T
    return pi_b * normal_cdf((lg + 0.5 * s * s) / s) - disc * normal_cdf((lg - 0.5 * s * s) / s)


def crypto_usd_call(
    bitcoin_model,
    usd: SovereignGBM,
    T: float,
    K: float,
    method: str = "radial-quadrature",
    rng: RngStream | None = None,
    *,
    curve: VolatilityCurve,
    n_samples: int = 100_000,
) -> PriceQuote:
    """Dollar price of a call on one bitcoin struck at ``K`` dollars.

    The dollar kernel is a GBM independent of the bitcoin drivers, so the
    dollar expectation is done in closed form::

        C_0 = E[pi_T^B N(g+) - K e^{-rT} pi_0^$ N(g-)] / pi_0^$
        g+- = (log(pi_T^B / (K pi_0^$)) + r T +- lam^2 T / 2) / (lam sqrt(T))

    The remaining expectation over ``pi_T^B`` uses ``method="mc"`` (exact
    draws) or ``"radial-quadrature"`` (Bessel(3) only: one integral over the
    law of ``xi_T``). ``lam = 0`` uses ``E[(pi_T^B - K pi_0^$ e^{-rT})^+]``,
    and ``K = 0`` gives ``pi_0^B P^B_0T / pi_0^$``.
    """
    if K < 0:
        raise DomainError("strike must be >= 0")
    if not T > 0:
        raise DomainError("T must be > 0")
    p0 = usd.initial
    if method == "radial-quadrature":
        if not isinstance(bitcoin_model, Bessel3):
            raise UnsupportedModelError("radial quadrature needs a Bessel(3) bitcoin kernel")
        if K == 0:
            return PriceQuote(float(bond_price(bitcoin_model, initial_state(bitcoin_model), curve, T)) / p0, method, 0.0)
        S = float(curve.variance_to(T))
        root = math.sqrt(S)

        def f(x):
            x = np.asarray(x, dtype=float)
            dens = (
                x
                / math.sqrt(2.0 * math.pi * S)
                * np.exp(-((x - 1.0) ** 2) / (2.0 * S))
                * -np.expm1(-2.0 * x / S)
            )
            with np.errstate(divide="ignore"):
                inner = _usd_inner(1.0 / x, K, usd, T)
            return np.where(x > 0, inner * dens, 0.0)

        upper = 2.0 + 12.0 * root
        if usd.risk_premium == 0:
            upper = min(upper, 1.0 / (K * p0 * math.exp(-usd.short_rate * T)))
        peaks = [1.0 + k * root for k in (-8.0, -2.0, 0.0, 2.0, 8.0)]
        val, err = integrate(f, QuadratureSpec(0.0, upper, 1e-14, 1e-12), peaks)
        return PriceQuote(val / p0, method, err / p0)
    if method == "mc":
        n = int(n_samples)
        if n < 2:
            raise DomainError("n_samples must be >= 2")
        rng = rng or RngStream()
        market = MultiCurrencyMarket.independent([("btc", bitcoin_model, curve)])
        vals = []
        for b, start in enumerate(range(0, n, _CHUNK)):
            size = min(_CHUNK, n - start)
            pis, bad, _ = _joint_kernels(market, T, size, rng.substream(b))
            if np.any(bad):
                raise DegenerateInputError("singular bitcoin kernel draw")
            vals.append(_usd_inner(pis["btc"], K, usd, T))
        x = np.concatenate(vals) / p0
        return PriceQuote(float(np.mean(x)), method, float(np.std(x, ddof=1) / math.sqrt(n)))
    raise DomainError(f"unknown method {method!r}; use 'mc' or 'radial-quadrature'")


def crypto_usd_call_joint_mc(
    bitcoin_model,
    usd: SovereignGBM,
    T: float,
    K: float,
    *,
    curve: VolatilityCurve,
    n_samples: int = 100_000,
    rng: RngStream | None = None,
) -> PriceQuote:
    """Plain joint Monte Carlo of ``(pi_T^B - K pi_T^$)^+ / pi_0^$``.

    The dollar Brownian motion is sampled as well. This is the oracle for
    :func:`crypto_usd_call` and shares none of its conditional algebra.
    """
    n = int(n_samples)
    rng = rng or RngStream()
    market = MultiCurrencyMarket.independent([("btc", bitcoin_model, curve)])
    vals = []
    for b, start in enumerate(range(0, n, _CHUNK)):
        size = min(_CHUNK, n - start)
        sub = rng.substream(b)
        pis, bad, _ = _joint_kernels(market, T, size, sub)
        if np.any(bad):
            raise DegenerateInputError("singular bitcoin kernel draw")
        w = math.sqrt(T) * sub.standard_normal(size)
        lam = usd.risk_premium
        pi_usd = usd.initial * np.exp(-usd.short_rate * T - lam * w - 0.5 * lam * lam * T)
        vals.append(np.maximum(pis["btc"] - K * pi_usd, 0.0))
    x = np.concatenate(vals) / usd.initial
    return PriceQuote(float(np.mean(x)), "joint-mc", float(np.std(x, ddof=1) / math.sqrt(n)))
