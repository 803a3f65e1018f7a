"""scikit-learn style estimators wrapping yield-curve calibration.

``fit(T, y)`` calibrates a volatility curve to observed yields and
``predict(T)`` returns model yields, so calibration composes with sklearn
tooling (``clone``, ``cross_val_score``, parameter grids).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .kernels import Bessel3, Bessel4
from .term_structure import bessel4_curve, calibrate_bessel3, calibrate_bessel4, yield_curve

__all__ = ["Bessel3YieldCurve", "Bessel4YieldCurve"]


def _maturities(X) -> np.ndarray:
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError("X must hold a single column of maturities")
        X = X[:, 0]
    return X


class _YieldCurveBase(RegressorMixin, BaseEstimator):
    def _sorted(self, X, y):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        order = np.argsort(X[:, 0], kind="stable")
        return X[order, 0], y[order], order

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "volatility_curve_")
        return np.asarray(yield_curve(self.model_, self.volatility_curve_, _maturities(X)), dtype=float).reshape(-1)


class Bessel3YieldCurve(_YieldCurveBase):
    """Piecewise-constant Bessel(3) volatility fitted exactly to yield quotes.

    Attributes
    ----------
    volatility_curve_ : VolatilityCurve
    model_ : Bessel3
    """

    def fit(self, X, y):
        T, Y, _ = self._sorted(X, y)
        self.volatility_curve_ = calibrate_bessel3(zip(T.tolist(), Y.tolist()))
        self.model_ = Bessel3()
        self.n_features_in_ = 1
        return self


class Bessel4YieldCurve(_YieldCurveBase):
    """Bessel(4) volatility from yields and their slope in maturity.

    Parameters
    ----------
    y0_tol : float
        Tolerance on ``Y(0) = 0`` for a sample at ``T = 0``.

    Slopes are taken from ``fit(..., y_prime=...)`` when given, otherwise
    from second-order finite differences of the samples.
    """

    def __init__(self, y0_tol: float = 1e-10):
        self.y0_tol = y0_tol

    def fit(self, X, y, y_prime=None):
        T, Y, order = self._sorted(X, y)
        if y_prime is None:
            if T.size < 3:
                raise ValueError("need at least three samples to estimate slopes")
            dY = np.gradient(Y, T, edge_order=2)
        else:
            dY = np.asarray(y_prime, dtype=float)[order]
        self.sigma_sq_ = calibrate_bessel4(T, Y, dY, y0_tol=self.y0_tol)
        self.volatility_curve_ = bessel4_curve(T[T > 0], self.sigma_sq_)
        self.model_ = Bessel4()
        self.n_features_in_ = 1
        return self
