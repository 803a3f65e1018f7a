"""Exception hierarchy shared across the package."""


class CryptoRatesError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CryptoRatesError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularityError(DomainError):
    """A factor state sits on (or numerically at) the kernel's singular set."""


class UnsupportedModelError(CryptoRatesError, TypeError):
    """The requested operation is not available for this kernel model."""


class ConvergenceError(CryptoRatesError, ArithmeticError):
    """An iterative or adaptive routine failed to reach its tolerance.

    Attributes
    ----------
    best_estimate : float
        The last value computed before giving up.
    err_est : float
        Error estimate attached to ``best_estimate``.
    """

    def __init__(self, message, best_estimate=float("nan"), err_est=float("inf")):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.err_est = err_est


class SeriesDivergenceError(ConvergenceError):
    """Series terms stopped decreasing before the truncation cap."""


class CalibrationError(CryptoRatesError, ValueError):
    """Market data are inconsistent with the model (no-arbitrage violation).

    Attributes
    ----------
    maturity : float or None
        The offending maturity, when one can be named.
    """

    def __init__(self, message, maturity=None):
        super().__init__(message)
        self.maturity = maturity


class ConstraintError(CalibrationError):
    """Input data violate a hard constraint such as Y(0) = 0."""


class DegenerateInputError(CryptoRatesError, ValueError):
    """No usable samples could be produced for a Monte Carlo estimate."""
