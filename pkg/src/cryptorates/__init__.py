"""Zero-short-rate term structures from reciprocal Bessel pricing kernels."""

from .derivatives import (
    BondOptionSpec,
    CapletSpec,
    PriceQuote,
    bond_call_b4,
    bond_put_b4,
    caplet_price,
    critical_numeraire,
    digital_call_price,
    simple_rate,
    strike_notional,
)
from .exceptions import (
    CalibrationError,
    ConstraintError,
    ConvergenceError,
    CryptoRatesError,
    DegenerateInputError,
    DomainError,
    SeriesDivergenceError,
    SingularityError,
    UnsupportedModelError,
)
from .fx import Currency, MultiCurrencyMarket, crypto_crypto_call_mc, crypto_usd_call, exchange_rate
from .kernels import (
    Bessel3,
    Bessel4,
    BesselN,
    ComplexBessel3,
    SovereignGBM,
    initial_state,
    kernel_value,
    natural_numeraire,
)
from .mc_oracle import McEstimate, martingale_test, price_claim, strictness_test
from .stochastic import DEFAULT_SEED, FactorState, RngStream, VolatilityCurve, accumulated_variance
from .term_structure import (
    YieldPoint,
    bond_price,
    calibrate_bessel3,
    calibrate_bessel4,
    forward_rate,
    short_rate,
    yield_curve,
)

__version__ = "0.1.0"

__all__ = [
    "Bessel3",
    "Bessel4",
    "BesselN",
    "BondOptionSpec",
    "CalibrationError",
    "CapletSpec",
    "ComplexBessel3",
    "ConstraintError",
    "ConvergenceError",
    "CryptoRatesError",
    "Currency",
    "DEFAULT_SEED",
    "DegenerateInputError",
    "DomainError",
    "FactorState",
    "McEstimate",
    "MultiCurrencyMarket",
    "PriceQuote",
    "RngStream",
    "SeriesDivergenceError",
    "SingularityError",
    "SovereignGBM",
    "UnsupportedModelError",
    "VolatilityCurve",
    "YieldPoint",
    "accumulated_variance",
    "bond_call_b4",
    "bond_price",
    "bond_put_b4",
    "calibrate_bessel3",
    "calibrate_bessel4",
    "caplet_price",
    "critical_numeraire",
    "crypto_crypto_call_mc",
    "crypto_usd_call",
    "digital_call_price",
    "exchange_rate",
    "forward_rate",
    "initial_state",
    "kernel_value",
    "martingale_test",
    "natural_numeraire",
    "price_claim",
    "short_rate",
    "simple_rate",
    "strictness_test",
    "strike_notional",
    "yield_curve",
]
