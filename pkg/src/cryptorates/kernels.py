"""Pricing-kernel models built from reciprocal Bessel processes.

Real models take ``pi_t = |xi_t|^(2-n)`` where ``xi_t`` are the driver
offsets from a unit-norm centre, so ``pi_0 = 1``. The complexified
three-dimensional model moves the centre into ``C^3`` and keeps the real
part. The dollar kernel of the FX module is a plain geometric Brownian
motion.

All functions accept either a :class:`~cryptorates.stochastic.FactorState`
or a raw offsets array of shape ``(..., n)``; array input is evaluated
row-wise and returns an array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import DomainError, SingularityError, UnsupportedModelError
from .stochastic import FactorState

__all__ = [
    "BesselN",
    "Bessel3",
    "Bessel4",
    "ComplexBessel3",
    "SovereignGBM",
    "KernelModel",
    "initial_state",
    "kernel_value",
    "complex_kernel_value",
    "natural_numeraire",
    "sde_diffusion",
    "market_price_of_risk",
    "sovereign_kernel_value",
    "omega",
    "model_to_dict",
    "model_from_dict",
]

SINGULAR_NORM = 1e-12
_UNIT_TOL = 1e-12


def _unit(n: int) -> tuple[float, ...]:
    return tuple([0.0] * (n - 1) + [1.0])


@dataclass(frozen=True)
class BesselN:
    """Reciprocal Bessel(n) kernel ``pi_t = |X_t - c|^(2 - n)``.

    Parameters
    ----------
    order : int
        Dimension ``n >= 3`` of the underlying Bessel process.
    center : sequence of float, optional
        Unit-norm centre ``c``. Defaults to the last basis vector; by
        rotational symmetry every unit vector gives the same law for
        ``pi_t``.
    """

    order: int
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        n = int(self.order)
        if n != self.order or n < 3:
            raise DomainError(f"Bessel order must be an integer >= 3, got {self.order!r}")
        center = _unit(n) if self.center is None else tuple(float(c) for c in self.center)
        if len(center) != n:
            raise DomainError(f"centre must have {n} components, got {len(center)}")
        norm = math.sqrt(math.fsum(c * c for c in center))
        if abs(norm - 1.0) > _UNIT_TOL:
            raise DomainError(f"centre must have unit norm (pi_0 = 1), got |c| = {norm!r}")
        object.__setattr__(self, "order", n)
        object.__setattr__(self, "center", center)

    @property
    def dim(self) -> int:
        return self.order


class Bessel3(BesselN):
    """Reciprocal Bessel(3) kernel ``pi_t = 1/|X_t - c|`` (Coulomb potential)."""

    def __init__(self, center=(0.0, 0.0, 1.0)):
        super().__init__(3, center)

    def __repr__(self):
        return f"Bessel3(center={self.center})"


class Bessel4(BesselN):
    """Reciprocal squared Bessel(4) kernel ``pi_t = 1/|X_t - c|^2``."""

    def __init__(self, center=(0.0, 0.0, 0.0, 1.0)):
        super().__init__(4, center)

    def __repr__(self):
        return f"Bessel4(center={self.center})"


def principal_sqrt(A, B):
    """Principal square root of ``A + iB`` from the explicit real/imag split.

    ``B == 0`` is treated as the real square root of ``A`` when ``A >= 0``
    and as ``i*sqrt(-A)`` otherwise.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    # the larger component comes from |A| + |z|, which never cancels; the
    # smaller one is B / (2 * larger)
    big = np.sqrt(0.5 * (np.abs(A) + np.hypot(A, B)))
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(big > 0, 0.5 * np.abs(B) / np.where(big > 0, big, 1.0), 0.0)
    re = np.where(A >= 0, big, small)
    im = np.where(A >= 0, small, big)
    im = np.where(B < 0, -im, im)
    return re + 1j * im


@dataclass(frozen=True)
class ComplexBessel3:
    """Bessel(3) kernel with a complex centre ``a = center_re + i*center_im``.

    The kernel is ``Re(1/omega_t)`` with ``omega_t`` the principal square
    root of ``(X_t - a) . (X_t - a)``. Construction checks the normalisation
    ``pi_0 = Re(1/omega_0) = 1``; use :meth:`normalized` to rescale an
    arbitrary pair of vectors onto that constraint.
    """

    center_re: tuple[float, float, float]
    center_im: tuple[float, float, float]

    def __post_init__(self):
        re = tuple(float(c) for c in self.center_re)
        im = tuple(float(c) for c in self.center_im)
        if len(re) != 3 or len(im) != 3:
            raise DomainError("complex centre components must be 3-vectors")
        if math.sqrt(math.fsum(c * c for c in im)) == 0.0:
            raise DomainError("imaginary part is zero: use Bessel3 instead")
        object.__setattr__(self, "center_re", re)
        object.__setattr__(self, "center_im", im)
        w0 = complex(omega(self, -np.array(re)))
        if abs(w0) < SINGULAR_NORM:
            raise SingularityError("initial state sits on the ring singularity")
        pi0 = (1.0 / w0).real
        if abs(pi0 - 1.0) > 1e-10:
            raise DomainError(
                f"normalisation pi_0 = Re(1/omega_0) = 1 violated (got {pi0!r}); "
                "see ComplexBessel3.normalized"
            )

    @classmethod
    def normalized(cls, center_re, center_im) -> "ComplexBessel3":
        """Rescale both centre components so that ``pi_0 = 1``.

        ``omega`` is homogeneous of degree one in ``(center_re, center_im)``,
        so dividing both by ``Re(1/omega_0)`` fixes the normalisation.
        """
        re = np.asarray(center_re, dtype=float)
        im = np.asarray(center_im, dtype=float)
        A = re @ re - im @ im
        B = -2.0 * (-re) @ im
        w0 = complex(principal_sqrt(A, B))
        if abs(w0) < SINGULAR_NORM:
            raise SingularityError("initial state sits on the ring singularity")
        s = (1.0 / w0).real
        if not s > 0:
            raise SingularityError("initial state sits on the branch disk")
        return cls(tuple(re * s), tuple(im * s))

    @property
    def delta(self) -> np.ndarray:
        return np.array(self.center_im)

    @property
    def dim(self) -> int:
        return 3


@dataclass(frozen=True)
class SovereignGBM:
    """Dollar-style kernel ``pi0 * exp(-r t - lam B_t - lam^2 t / 2)``."""

    short_rate: float
    risk_premium: float
    initial: float = 1.0

    def __post_init__(self):
        for name in ("short_rate", "risk_premium", "initial"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.risk_premium < 0:
            raise DomainError("risk_premium must be >= 0")
        if self.initial <= 0:
            raise DomainError("initial kernel value must be > 0")


KernelModel = Union[BesselN, ComplexBessel3]


def _offsets(state) -> np.ndarray:
    if isinstance(state, FactorState):
        return state.vector
    return np.asarray(state, dtype=float)


def _check_dim(model, x: np.ndarray):
    if x.shape[-1] != model.dim:
        raise DomainError(f"state has {x.shape[-1]} components, model needs {model.dim}")


def _out(arr):
    arr = np.asarray(arr)
    return arr.item() if arr.ndim == 0 else arr


def initial_state(model) -> FactorState:
    """Time-0 state: drivers at the origin, so offsets are ``-centre``."""
    if isinstance(model, ComplexBessel3):
        return FactorState(0.0, tuple(-c for c in model.center_re))
    if isinstance(model, BesselN):
        return FactorState(0.0, tuple(-c for c in model.center))
    raise UnsupportedModelError(f"no factor state for {type(model).__name__}")


def omega(model: ComplexBessel3, state):
    """Complex radius ``omega_t``: principal root of ``xi^2 - delta^2 - 2i xi.delta``."""
    x = _offsets(state)
    _check_dim(model, x)
    d = model.delta
    A = np.einsum("...i,...i->...", x, x) - d @ d
    B = -2.0 * (x @ d)
    return _out(principal_sqrt(A, B))


def complex_kernel_value(model: ComplexBessel3, state):
    """The complexified kernel ``1/omega_t`` itself (real and imaginary parts)."""
    w = np.asarray(omega(model, state))
    if np.any(np.abs(w) < SINGULAR_NORM):
        raise SingularityError("state sits on the ring singularity")
    return _out(1.0 / w)


def natural_numeraire(model, state):
    """``xi_t = |offsets|``; equals ``1/pi_t`` for Bessel(3), ``pi_t^(-1/2)`` for Bessel(4)."""
    if not isinstance(model, BesselN):
        raise UnsupportedModelError("natural numeraire is defined for real Bessel models")
    x = _offsets(state)
    _check_dim(model, x)
    xi = np.sqrt(np.einsum("...i,...i->...", x, x))
    if np.any(xi < SINGULAR_NORM):
        raise SingularityError("state sits on the kernel singularity")
    return _out(xi)


def kernel_value(model, state):
    """Pricing kernel ``pi_t`` at a factor state.

    Raises
    ------
    SingularityError
        At the centre (real models) or on the ring / branch disk of the
        complex model, where the real part vanishes or blows up.
    """
    if isinstance(model, BesselN):
        xi = np.asarray(natural_numeraire(model, state))
        return _out(xi ** (2 - model.order))
    if isinstance(model, ComplexBessel3):
        u = np.asarray(complex_kernel_value(model, state))
        pi = u.real
        if np.any(pi <= 0):
            raise SingularityError("state sits on the branch disk of the complex kernel")
        return _out(pi)
    raise UnsupportedModelError(f"kernel_value not defined for {type(model).__name__}")


def sde_diffusion(model, state, sigma_t):
    """Diffusion coefficient of ``d pi_t = -(n-2) sigma_t pi_t^((n-1)/(n-2)) dW_t``.

    The drift is identically zero for these models, so only the diffusion
    coefficient is returned.
    """
    if not isinstance(model, BesselN):
        raise UnsupportedModelError("SDE coefficients are only available for real Bessel models")
    n = model.order
    pi = np.asarray(kernel_value(model, state))
    return _out(-(n - 2) * np.asarray(sigma_t) * pi ** ((n - 1) / (n - 2)))


def market_price_of_risk(model, state, sigma_t):
    """``sigma_t pi_t`` for Bessel(3); ``2 sigma_t / xi_t`` for Bessel(4)."""
    if not isinstance(model, BesselN) or model.order not in (3, 4):
        raise UnsupportedModelError("market price of risk is available for Bessel(3) and Bessel(4)")
    xi = np.asarray(natural_numeraire(model, state))
    if model.order == 3:
        return _out(np.asarray(sigma_t) / xi)
    return _out(2.0 * np.asarray(sigma_t) / xi)


def sovereign_kernel_value(params: SovereignGBM, brownian_value, t):
    """GBM kernel ``pi0 exp(-r t - lam B_t - lam^2 t/2)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be >= 0")
    lam = params.risk_premium
    b = np.asarray(brownian_value, dtype=float)
    return _out(params.initial * np.exp(-params.short_rate * t - lam * b - 0.5 * lam * lam * t))


# --- serialisation -------------------------------------------------------


def model_to_dict(model) -> dict:
    if isinstance(model, ComplexBessel3):
        return {
            "model": "complex-bessel3",
            "center_re": list(model.center_re),
            "center_im": list(model.center_im),
        }
    if isinstance(model, BesselN):
        if model.order == 3:
            return {"model": "bessel3", "center": list(model.center)}
        if model.order == 4:
            return {"model": "bessel4", "center": list(model.center)}
        return {"model": "bessel-n", "order": model.order, "center": list(model.center)}
    if isinstance(model, SovereignGBM):
        return {
            "model": "sovereign-gbm",
            "short_rate": model.short_rate,
            "risk_premium": model.risk_premium,
            "initial": model.initial,
        }
    raise UnsupportedModelError(f"cannot serialise {type(model).__name__}")


def model_from_dict(data: dict):
    """Inverse of :func:`model_to_dict`, tagged by ``data["model"]``.

    A complex model may set ``"normalize": true`` to have its centre
    rescaled onto ``pi_0 = 1``.
    """
    try:
        tag = data["model"]
    except (KeyError, TypeError) as exc:
        raise DomainError("model JSON needs a 'model' tag") from exc
    if tag == "bessel3":
        return Bessel3(data.get("center", (0.0, 0.0, 1.0)))
    if tag == "bessel4":
        return Bessel4(data.get("center", (0.0, 0.0, 0.0, 1.0)))
    if tag == "bessel-n":
        order = int(data["order"])
        if order == 3:
            return Bessel3(data.get("center", _unit(3)))
        if order == 4:
            return Bessel4(data.get("center", _unit(4)))
        return BesselN(order, data.get("center"))
    if tag == "complex-bessel3":
        if data.get("normalize", False):
            return ComplexBessel3.normalized(data["center_re"], data["center_im"])
        return ComplexBessel3(tuple(data["center_re"]), tuple(data["center_im"]))
    if tag == "sovereign-gbm":
        return SovereignGBM(
            float(data["short_rate"]), float(data["risk_premium"]), float(data.get("initial", 1.0))
        )
    raise DomainError(f"unknown model tag {tag!r}")
