"""Monte Carlo pricing by exact sampling of the drivers, plus statistical tests.

A claim paying ``H`` at ``t`` is worth ``E[pi_t H] / pi_0``. Terminal offsets
are drawn exactly, so the only error is statistical. The checks here use
none of the closed forms under test except as targets.

Samples are drawn in fixed blocks of :data:`CHUNK_SIZE`. Block ``i`` always
uses ``rng.substream(i)``, so an estimate depends only on the inputs and the
seed and never on ``n_jobs``.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import DegenerateInputError, DomainError, SingularityError, UnsupportedModelError
from .kernels import SINGULAR_NORM, BesselN, ComplexBessel3, initial_state, principal_sqrt
from .stochastic import FactorState, RngStream, VolatilityCurve, accumulated_variance, sample_offsets
from .term_structure import bond_price, bond_price_from_variance

__all__ = [
    "CHUNK_SIZE",
    "Z_THRESHOLD",
    "McEstimate",
    "TestReport",
    "kernel_values",
    "price_claim",
    "price_path_claim",
    "martingale_test",
    "strictness_test",
]

CHUNK_SIZE = 8192
Z_THRESHOLD = 3.0
MAX_SINGULAR = 10
_MAX_REDRAWS = 100


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_err: float
    n_samples: int
    rejected_singular: int = 0

    def __post_init__(self):
        if self.std_err < 0:
            raise DomainError("std_err must be >= 0")
        if self.n_samples < 1:
            raise DomainError("n_samples must be >= 1")

    def z_score(self, target: float) -> float:
        diff = self.mean - target
        if self.std_err == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.std_err


@dataclass(frozen=True)
class TestReport:
    """Outcome of one statistical check.

    ``statistic`` is the MC estimate, ``target`` the value it should match.
    """

    __test__ = False  # not a pytest class

    name: str
    statistic: float
    target: float
    std_err: float
    passed: bool
    extra: dict = field(default_factory=dict)

    @property
    def z(self) -> float:
        if self.std_err == 0:
            return 0.0 if self.statistic == self.target else math.inf
        return (self.statistic - self.target) / self.std_err

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "statistic": self.statistic,
            "target": self.target,
            "std_err": self.std_err,
            "pass": self.passed,
        }
        out.update(self.extra)
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def kernel_values(model, offsets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Kernel values for a batch of offsets, with a mask of singular rows.

    Singular rows get value 0. For the complex model the real part of
    ``1/omega`` is returned without the positivity check of
    :func:`kernel_value`; it vanishes on the branch disk.
    """
    if not isinstance(model, (BesselN, ComplexBessel3)):
        raise UnsupportedModelError(f"no Monte Carlo kernel for {type(model).__name__}")
    X = np.asarray(offsets, dtype=float)
    if X.shape[-1] != model.dim:
        raise DomainError(f"offsets have {X.shape[-1]} components, model needs {model.dim}")
    if isinstance(model, BesselN):
        xi = np.sqrt(np.einsum("ij,ij->i", X, X))
        bad = xi < SINGULAR_NORM
        with np.errstate(divide="ignore"):
            vals = np.where(bad, 0.0, np.where(bad, 1.0, xi) ** (2 - model.order))
        return vals, bad
    if isinstance(model, ComplexBessel3):
        d = model.delta
        w = principal_sqrt(np.einsum("ij,ij->i", X, X) - d @ d, -2.0 * (X @ d))
        bad = np.abs(w) < SINGULAR_NORM
        vals = np.where(bad, 0.0, (1.0 / np.where(bad, 1.0, w)).real)
        return vals, bad


def _chunks(n: int) -> list[int]:
    sizes = [CHUNK_SIZE] * (n // CHUNK_SIZE)
    if n % CHUNK_SIZE:
        sizes.append(n % CHUNK_SIZE)
    return sizes


def _run_chunk(model, curve, base, t0, t, size, rng, antithetic, payoff, vectorized):
    X = sample_offsets(curve, base, t0, t, size, rng, antithetic=antithetic)
    vals, bad = kernel_values(model, X)
    rejected = 0
    redraws = 0
    while np.any(bad):
        k = int(bad.sum())
        rejected += k
        redraws += 1
        if redraws > _MAX_REDRAWS:
            raise DegenerateInputError("could not draw non-singular samples")
        X[bad] = sample_offsets(curve, base, t0, t, k, rng)
        vals[bad], bad_new = kernel_values(model, X[bad])
        idx = np.flatnonzero(bad)
        bad = np.zeros_like(bad)
        bad[idx[bad_new]] = True
    if vectorized:
        h = np.asarray(payoff(X), dtype=float)
        h = np.broadcast_to(h, (size,))
    else:
        h = np.array([payoff(FactorState(t, tuple(row))) for row in X], dtype=float)
    return vals * h, rejected


def price_claim(
    model,
    curve: VolatilityCurve,
    payoff: Callable,
    t: float,
    n_samples: int = 100_000,
    rng: RngStream | None = None,
    *,
    antithetic: bool = False,
    n_jobs: int = 1,
    initial: FactorState | None = None,
    vectorized: bool = False,
) -> McEstimate:
    """Monte Carlo value ``E[pi_t H(X_t)] / pi_s`` of a claim paying at ``t``.

    Parameters
    ----------
    payoff
        ``H(state) -> float`` taking a :class:`FactorState`, or with
        ``vectorized=True`` a function of the ``(n, d)`` offsets array.
    initial
        Starting state (default: the model's time-0 state).
    antithetic
        Pair every draw with its negated increments. The standard error is
        then computed from the pair averages, so ``n_samples`` must be even.
    n_jobs
        Worker threads. Results are bit-identical for any value.

    Singular draws are redrawn from the advanced block stream and counted in
    ``rejected_singular``; a nonzero count triggers a ``RuntimeWarning``.
    """
    if not t > 0:
        raise DomainError("t must be > 0")
    n = int(n_samples)
    if n < 1:
        raise DomainError("n_samples must be >= 1")
    if antithetic and (n % 2 or n < 4):
        raise DomainError("antithetic sampling needs an even n_samples >= 4")
    rng = rng or RngStream()
    initial = initial or initial_state(model)
    if t < initial.time:
        raise DomainError("t must not precede the initial state")
    base = initial.vector
    pi0_arr, bad0 = kernel_values(model, base[None, :])
    if bad0[0] or not pi0_arr[0] > 0:
        raise SingularityError("the initial state sits on the kernel singularity")
    pi0 = float(pi0_arr[0])
    sizes = _chunks(n)

    def job(i):
        return _run_chunk(model, curve, base, initial.time, t, sizes[i], rng.substream(i), antithetic, payoff, vectorized)

    if n_jobs > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(job, range(len(sizes))))
    else:
        results = [job(i) for i in range(len(sizes))]
    samples = np.concatenate([r[0] for r in results]) / pi0
    rejected = sum(r[1] for r in results)
    if rejected:
        warnings.warn(f"{rejected} singular samples were rejected and redrawn", RuntimeWarning, stacklevel=2)
    if antithetic:
        # each chunk holds its first half then its mirrored half
        pairs = []
        for (vals, _), size in zip(results, sizes):
            half = size // 2
            pairs.append(0.5 * (vals[:half] + vals[half : 2 * half]) / pi0)
        units = np.concatenate(pairs)
    else:
        units = samples
    mean = float(np.mean(samples))
    se = float(np.std(units, ddof=1) / math.sqrt(units.size)) if units.size > 1 else 0.0
    return McEstimate(mean, se, n, rejected)


def price_path_claim(
    model,
    curve: VolatilityCurve,
    payoff: Callable,
    times,
    n_samples: int = 100_000,
    rng: RngStream | None = None,
) -> McEstimate:
    """Monte Carlo value of a claim paying at the last of ``times``, whose
    amount depends on the offsets at every date in ``times``.

    ``payoff`` receives a list of ``(n, d)`` offset arrays, one per date, and
    returns ``n`` amounts. States are drawn sequentially with exact
    increments; singular terminal draws are not expected for the real
    models and abort the estimate.
    """
    times = [float(t) for t in times]
    if not times or times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
        raise DomainError("times must be positive and strictly increasing")
    n = int(n_samples)
    if n < 2:
        raise DomainError("n_samples must be >= 2")
    rng = rng or RngStream()
    init = initial_state(model)
    pi0 = float(kernel_values(model, init.vector[None, :])[0][0])
    out = []
    for i, size in enumerate(_chunks(n)):
        sub = rng.substream(i)
        states, prev, t_prev = [], np.broadcast_to(init.vector, (size, init.dim)), 0.0
        for t in times:
            prev = sample_offsets(curve, prev, t_prev, t, size, sub)
            states.append(prev)
            t_prev = t
        vals, bad = kernel_values(model, prev)
        if np.any(bad):
            raise DegenerateInputError("singular terminal draw in a path claim")
        out.append(vals * np.asarray(payoff(states), dtype=float))
    x = np.concatenate(out) / pi0
    return McEstimate(float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(n)), n, 0)


def _report(name, est: McEstimate, target: float, extra=None) -> TestReport:
    ok = abs(est.mean - target) <= Z_THRESHOLD * est.std_err and est.rejected_singular <= MAX_SINGULAR
    info = {"z": est.z_score(target), "n_samples": est.n_samples, "rejected_singular": est.rejected_singular}
    info.update(extra or {})
    return TestReport(name, est.mean, target, est.std_err, bool(ok), info)


def martingale_test(
    model,
    curve: VolatilityCurve,
    T_outer: float,
    t_inner: float,
    n_samples: int = 100_000,
    rng: RngStream | None = None,
    *,
    bond_fn: Callable | None = None,
    target: float | None = None,
    n_jobs: int = 1,
) -> TestReport:
    """Check ``E[pi_t P_tT] / pi_0 = P_0T`` (tower property) within 3 SE.

    ``bond_fn(model, offsets, Sigma)`` prices the bond at the sampled inner
    states; it defaults to the closed form and can be replaced to test
    other bond formulas. ``target`` overrides the closed-form ``P_0T``.
    """
    if not (0 <= t_inner < T_outer):
        raise DomainError("need 0 <= t_inner < T_outer")
    if target is None:
        target = float(bond_price(model, initial_state(model), curve, T_outer))
    bond_fn = bond_fn or bond_price_from_variance
    if t_inner == 0:
        est = McEstimate(target, 0.0, max(int(n_samples), 1))
        return _report("martingale", est, target)
    S = accumulated_variance(curve, t_inner, T_outer)
    est = price_claim(
        model, curve, lambda X: bond_fn(model, X, S), t_inner, n_samples, rng, n_jobs=n_jobs, vectorized=True
    )
    return _report("martingale", est, target, {"t": t_inner, "T": T_outer})


def strictness_test(
    model,
    curve: VolatilityCurve,
    t: float,
    n_samples: int = 100_000,
    rng: RngStream | None = None,
    *,
    target: float | None = None,
    n_jobs: int = 1,
) -> TestReport:
    """Check that ``E[pi_t] / pi_0`` sits below 1 by more than 3 SE while
    matching ``P_0t`` within 3 SE.

    ``target`` overrides the closed-form ``P_0t`` for models without one.
    """
    if not t > 0:
        raise DomainError("t must be > 0")
    if target is None:
        target = float(bond_price(model, initial_state(model), curve, t))
    est = price_claim(model, curve, lambda X: 1.0, t, n_samples, rng, n_jobs=n_jobs, vectorized=True)
    gap_z = (1.0 - est.mean) / est.std_err if est.std_err > 0 else math.inf
    base = _report("strictness", est, target, {"t": t, "gap": 1.0 - est.mean, "gap_z": gap_z})
    passed = base.passed and gap_z > Z_THRESHOLD
    return TestReport(base.name, base.statistic, base.target, base.std_err, bool(passed), base.extra)
