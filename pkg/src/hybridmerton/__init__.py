"""Merton-type structural credit model with partial accounting information."""

__version__ = "0.1.0"

from .calibration import (
    CalibrationResult,
    MarketObservation,
    SpreadDecomposition,
    calibrate,
    decompose_spread,
    generate_synthetic_market,
    implied_rho,
    implied_sigma,
)
from .estimator import TransparencyCalibrator
from .model import (
    DebtClaim,
    ModelParams,
    PathBundle,
    ReportSchedule,
    filtered_value,
    firm_value,
    sample_paths,
    state_price_density,
)
from .pricing import (
    PricingContext,
    credit_spread,
    debt_price_closed_form,
    debt_price_report_date,
    equity_price_closed_form,
    normal_cdf,
    price_claim_quadrature,
    tau_nu,
)
