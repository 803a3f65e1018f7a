"""Deterministic volatility curves and exact sampling of the Gaussian drivers.

Each driver is ``X_t = int_0^t sigma_s dW_s``, a time-changed Brownian
motion, so terminal values can be drawn exactly from a normal law with
variance ``Sigma_{tT} = int_t^T sigma_s^2 ds``. No SDE is discretised here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DomainError, SingularityError

__all__ = [
    "DEFAULT_SEED",
    "VolatilityCurve",
    "FactorState",
    "RngStream",
    "accumulated_variance",
    "sample_terminal",
    "sample_offsets",
    "simulate_grid",
    "simulate_paths",
]

DEFAULT_SEED = 20190417
SIGMA_CAP = 100.0


@dataclass(frozen=True)
class VolatilityCurve:
    """Piecewise-constant, left-continuous volatility function.

    ``knots = ((t0, s0), (t1, s1), ...)`` with ``t0 = 0`` means
    ``sigma(t) = s_i`` for ``t`` in ``(t_i, t_{i+1}]`` and ``sigma(0) = s0``.
    The last value extends to infinity.
    """

    knots: tuple[tuple[float, float], ...]
    cap: float = SIGMA_CAP
    _times: np.ndarray = field(init=False, repr=False, compare=False)
    _sigmas: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        knots = tuple((float(t), float(s)) for t, s in self.knots)
        if not knots:
            raise DomainError("a volatility curve needs at least one knot")
        times = np.array([k[0] for k in knots])
        sigmas = np.array([k[1] for k in knots])
        if times[0] != 0.0:
            raise DomainError("the first knot must sit at t = 0")
        if np.any(np.diff(times) <= 0):
            raise DomainError("knot times must be strictly increasing")
        if not np.all(np.isfinite(sigmas)) or np.any(sigmas <= 0):
            raise DomainError("sigma values must be finite and strictly positive")
        if np.any(sigmas > self.cap):
            raise DomainError(f"sigma values must not exceed the cap {self.cap}")
        cum = np.concatenate([[0.0], np.cumsum(sigmas[:-1] ** 2 * np.diff(times))])
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "_times", times)
        object.__setattr__(self, "_sigmas", sigmas)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def constant(cls, sigma: float) -> "VolatilityCurve":
        return cls(((0.0, sigma),))

    @property
    def times(self) -> np.ndarray:
        return self._times.copy()

    @property
    def sigmas(self) -> np.ndarray:
        return self._sigmas.copy()

    def sigma(self, t, side: str = "left"):
        """Volatility at ``t``.

        ``side="left"`` gives the curve's own left-continuous value;
        ``side="right"`` gives the value on ``[t, next knot)``, which is the
        convention used for instantaneous forward rates.
        """
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("time must be >= 0")
        if side == "left":
            idx = np.searchsorted(self._times, t, side="left") - 1
        elif side == "right":
            idx = np.searchsorted(self._times, t, side="right") - 1
        else:
            raise ValueError("side must be 'left' or 'right'")
        out = self._sigmas[np.clip(idx, 0, None)]
        return float(out) if out.ndim == 0 else out

    def variance_to(self, T):
        """``Sigma_{0T}``, vectorised over ``T``."""
        T = np.asarray(T, dtype=float)
        idx = np.clip(np.searchsorted(self._times, T, side="right") - 1, 0, None)
        out = self._cum[idx] + self._sigmas[idx] ** 2 * (T - self._times[idx])
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"knots": [[t, s] for t, s in self.knots]}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "VolatilityCurve":
        try:
            knots = data["knots"]
        except (KeyError, TypeError) as exc:
            raise DomainError("volatility curve JSON needs a 'knots' list") from exc
        return cls(tuple((t, s) for t, s in knots))

    @classmethod
    def from_json(cls, text: str) -> "VolatilityCurve":
        return cls.from_dict(json.loads(text))


def accumulated_variance(curve: VolatilityCurve, t, T):
    """Exact ``Sigma_{tT} = int_t^T sigma_s^2 ds`` for a piecewise-constant curve.

    Raises
    ------
    DomainError
        If ``t > T`` or ``t < 0``.
    """
    t_arr = np.asarray(t, dtype=float)
    T_arr = np.asarray(T, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("t must be >= 0")
    if np.any(t_arr > T_arr):
        raise DomainError(f"need t <= T, got t={t}, T={T}")
    out = np.asarray(curve.variance_to(T_arr) - curve.variance_to(t_arr))
    out = np.where(t_arr == T_arr, 0.0, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FactorState:
    """Offsets ``(X^1_t - c_1, ..., X^n_t - c_n)`` of the drivers from the
    kernel centre at time ``time``. Their norm is the natural numeraire."""

    time: float
    offsets: tuple[float, ...]

    def __post_init__(self):
        offsets = tuple(float(x) for x in np.ravel(self.offsets))
        if self.time < 0 or not math.isfinite(self.time):
            raise DomainError("state time must be finite and >= 0")
        if len(offsets) < 3:
            raise DomainError("factor states need at least three components")
        if not all(math.isfinite(x) for x in offsets):
            raise DomainError("offsets must be finite")
        if math.sqrt(math.fsum(x * x for x in offsets)) == 0.0:
            raise SingularityError("offsets of zero norm sit on the kernel singularity")
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "offsets", offsets)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.offsets)

    @property
    def dim(self) -> int:
        return len(self.offsets)

    @property
    def xi(self) -> float:
        return math.sqrt(math.fsum(x * x for x in self.offsets))


class RngStream:
    """Reproducible normal stream keyed by ``(seed, stream_id)``.

    Built on the counter-based Philox generator, whose output for a given
    key does not depend on the platform. ``substream(i)`` derives an
    independent child keyed additionally by ``i``; Monte Carlo code hands
    child ``i`` to path (or block) ``i`` so that results never depend on
    how work is split between workers.
    """

    def __init__(self, seed: int = DEFAULT_SEED, stream_id: int = 0, _path: tuple = ()):
        if not (0 <= int(seed) < 2**64 and 0 <= int(stream_id) < 2**64):
            raise DomainError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = tuple(int(p) for p in _path)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self._path))
        self._gen = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self._path})"

    def substream(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, (*self._path, index))

    def standard_normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)


def _as_offsets(state) -> tuple[float, np.ndarray]:
    if isinstance(state, FactorState):
        return state.time, state.vector
    raise TypeError("expected a FactorState")


def sample_offsets(
    curve: VolatilityCurve,
    offsets,
    t: float,
    T: float,
    n: int,
    rng: RngStream,
    antithetic: bool = False,
) -> np.ndarray:
    """Draw ``n`` exact terminal offset vectors at ``T`` given offsets at ``t``.

    Returns an array of shape ``(n, d)``. With ``antithetic=True`` the second
    half of the draws uses the negated Gaussian increments of the first half.
    """
    base = np.asarray(offsets, dtype=float)
    if T < t:
        raise DomainError(f"need T >= t, got t={t}, T={T}")
    d = base.shape[-1]
    scale = math.sqrt(accumulated_variance(curve, t, T))
    if antithetic:
        half = (n + 1) // 2
        z = rng.standard_normal((half, d))
        z = np.concatenate([z, -z])[:n]
    else:
        z = rng.standard_normal((n, d))
    return base + scale * z


def sample_terminal(
    curve: VolatilityCurve, state: FactorState, T: float, rng: RngStream
) -> FactorState:
    """One exact draw of the factor state at ``T`` given ``state``."""
    t, base = _as_offsets(state)
    if T < t:
        raise DomainError(f"need T >= state.time, got T={T}, time={t}")
    if T == t:
        return state
    new = sample_offsets(curve, base, t, T, 1, rng)[0]
    return FactorState(T, tuple(new))


def simulate_grid(
    curve: VolatilityCurve,
    initial: FactorState,
    grid: Sequence[float],
    rng: RngStream,
) -> list[FactorState]:
    """Sequential exact sampling along ``grid`` (one path)."""
    grid = [float(g) for g in grid]
    if grid and grid[0] < initial.time:
        raise DomainError("grid must start at or after the initial time")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("grid times must be strictly increasing")
    out = []
    state = initial
    for g in grid:
        state = sample_terminal(curve, state, g, rng)
        out.append(state)
    return out


def simulate_paths(
    curve: VolatilityCurve,
    initial: FactorState,
    grid: Iterable[float],
    n_paths: int,
    rng: RngStream,
) -> np.ndarray:
    """Offsets along ``grid`` for ``n_paths`` paths, shape ``(n_paths, len(grid), d)``.

    Path ``p`` draws from ``rng.substream(p)``.
    """
    grid = np.asarray(list(grid), dtype=float)
    if grid.size and grid[0] < initial.time:
        raise DomainError("grid must start at or after the initial time")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("grid times must be strictly increasing")
    times = np.concatenate([[initial.time], grid])
    steps = np.sqrt(np.diff(curve.variance_to(times)))
    d = initial.dim
    out = np.empty((n_paths, grid.size, d))
    for p in range(n_paths):
        z = rng.substream(p).standard_normal((grid.size, d))
        out[p] = initial.vector + np.cumsum(steps[:, None] * z, axis=0)
    return out
