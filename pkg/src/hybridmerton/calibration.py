"""Recover sigma and rho from observed debt prices.

Two one-dimensional problems:

1. At report dates the debt price does not involve rho, so sigma is implied
   from report-date prices alone.
2. With sigma fixed, an intra-period price depends on rho only, through the
   effective volatility ``nu``; rho is implied from those prices.

The market value of the firm ``V'_t`` is an observed input (the market value
of the issued stock), so neither step needs the drift ``mu``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .exceptions import (
    IllConditionedError,
    IllConditionedWarning,
    NumericalError,
    OutOfBoundsError,
    ValidationError,
)
from .model import DebtClaim, ModelParams, ReportSchedule, sample_paths, batch_rng
from .pricing import (
    PricingContext,
    _debt_value,
    _tau_nu,
    debt_price_closed_form,
    debt_price_report_date,
    spread_from_price,
)

SIGMA_FLOOR = 1e-12
SIGMA_CEILING = 50.0
PRICE_TOL = 1e-10  # relative to face value


@dataclass(frozen=True)
class MarketObservation:
    t: float
    price: float
    at_report_date: bool
    claim: DebtClaim
    v_prime_observed: float

    def __post_init__(self):
        if not (math.isfinite(self.t) and 0 <= self.t < self.claim.maturity):
            raise ValidationError(f"observation time {self.t!r} must lie in [0, maturity)")
        if not (math.isfinite(self.price) and self.price > 0):
            raise ValidationError(f"price must be > 0, got {self.price!r}")
        if not (math.isfinite(self.v_prime_observed) and self.v_prime_observed > 0):
            raise ValidationError(f"v_prime must be > 0, got {self.v_prime_observed!r}")

    @property
    def horizon(self) -> float:
        return self.claim.maturity - self.t

    def check_bounds(self, r: float) -> "MarketObservation":
        bound = self.claim.face * math.exp(-r * self.horizon) + self.v_prime_observed
        if not self.price < bound:
            raise ValidationError(f"price {self.price!r} at t={self.t!r} violates the "
                                  f"no-arbitrage bound {bound!r}")
        return self


@dataclass(frozen=True)
class CalibrationResult:
    sigma_hat: float
    rho_hat: float | None
    residuals: tuple[float, ...]
    bracket_diagnostics: dict = field(default_factory=dict)

    @property
    def rho_identified(self) -> bool:
        return self.rho_hat is not None


@dataclass(frozen=True)
class SpreadDecomposition:
    """Credit spread split into a default part and a transparency part.

    ``total`` is stored as ``default_component + transparency_component`` so
    the columns add up exactly in floating point.
    """

    t: float
    default_component: float
    transparency_component: float

    @property
    def total(self) -> float:
        return self.default_component + self.transparency_component


# -- model prices used by the solvers -------------------------------------------------


def _report_price(sigma, obs: MarketObservation, r):
    return debt_price_report_date(obs.v_prime_observed, obs.claim.face, r, sigma, obs.horizon)


def _intra_price(rho, sigma, obs: MarketObservation, r, t_k):
    face = obs.claim.face
    disc = math.exp(-r * obs.horizon)
    tau, nu = _tau_nu(sigma, rho, r, t_k, obs.t, obs.claim.maturity)
    if nu == 0:
        return disc * min(face, obs.v_prime_observed * math.exp(tau))
    return float(_debt_value(obs.v_prime_observed, face, disc, tau, nu))


def _require_monotone(values, increasing, what):
    steps = np.diff(values)
    slack = 1e-12 * max(1.0, float(np.max(np.abs(values))))
    bad = steps < -slack if increasing else steps > slack
    if np.any(bad):
        raise NumericalError(f"{what} is not monotone on the bracket; refusing to solve "
                             f"(first violation at grid index {int(np.argmax(bad))})")


# -- sigma -------------------------------------------------------------------------------


def implied_sigma(obs: MarketObservation, r: float) -> float:
    """Volatility that reproduces a report-date debt price.

    Debt value falls strictly in sigma from ``min(face e^{-rT}, V)`` at
    sigma -> 0 towards 0 as sigma grows; the root is bracketed and refined
    with Brent's method.
    """
    if not obs.at_report_date:
        raise ValidationError("implied_sigma needs a report-date observation")
    face = obs.claim.face
    upper = min(face * math.exp(-r * obs.horizon), obs.v_prime_observed)
    if obs.price >= upper:
        raise OutOfBoundsError(
            f"price {obs.price!r} is not below the riskless limit {upper!r} (sigma -> 0)",
            bound="upper", limits=(0.0, upper))

    hi = 1.0
    while _report_price(hi, obs, r) >= obs.price:
        hi *= 2.0
        if hi > SIGMA_CEILING:
            raise OutOfBoundsError(
                f"price {obs.price!r} is below the model price at sigma={SIGMA_CEILING}",
                bound="lower", limits=(_report_price(SIGMA_CEILING, obs, r), upper))
    grid = np.geomspace(1e-4, hi, 33)
    _require_monotone([_report_price(s, obs, r) for s in grid], increasing=False,
                      what="debt price in sigma")

    sigma = optimize.brentq(lambda s: _report_price(s, obs, r) - obs.price, SIGMA_FLOOR, hi,
                            xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    residual = _report_price(sigma, obs, r) - obs.price
    if abs(residual) > PRICE_TOL * face:
        raise NumericalError(f"sigma solve left residual {residual:.3g}")
    h = 1e-6 * max(sigma, 1e-6)
    vega = (_report_price(sigma + h, obs, r) - _report_price(max(sigma - h, 0.0), obs, r)) / (2 * h)
    if abs(vega) < 1e-8 * face:
        width = PRICE_TOL * face / max(abs(vega), 1e-300)
        warnings.warn(
            f"debt price is nearly flat in sigma at t={obs.t}: sigma in about "
            f"[{max(sigma - width, 0.0):.6g}, {sigma + width:.6g}]",
            IllConditionedWarning, stacklevel=2)
    return float(sigma)


# -- rho ---------------------------------------------------------------------------------


def implied_rho(obs: MarketObservation, sigma: float, r: float, schedule: ReportSchedule) -> float:
    """Transparency parameter that reproduces an intra-period debt price.

    Debt value rises in rho (a larger rho lowers ``nu``); the attainable
    range runs from the rho -> 0 limit up to the full-observation price.
    """
    t_k = schedule.last_report(obs.t)
    if obs.at_report_date or obs.t == t_k:
        raise IllConditionedError(
            f"t={obs.t} is a report date: the debt price does not depend on rho")
    face = obs.claim.face
    lo_price = _intra_price(0.0, sigma, obs, r, t_k)
    hi_price = _intra_price(1.0, sigma, obs, r, t_k)
    tol = PRICE_TOL * face
    if obs.price == hi_price:
        return 1.0
    if obs.price > hi_price:
        raise OutOfBoundsError(
            f"price {obs.price!r} exceeds the full-transparency price {hi_price!r}",
            bound="upper", limits=(lo_price, hi_price))
    if obs.price <= lo_price:
        raise OutOfBoundsError(
            f"price {obs.price!r} is not above the rho -> 0 limit {lo_price!r}",
            bound="lower", limits=(lo_price, hi_price))
    grid = np.linspace(0.0, 1.0, 33)
    _require_monotone([_intra_price(g, sigma, obs, r, t_k) for g in grid], increasing=True,
                      what="debt price in rho")

    rho = optimize.brentq(lambda q: _intra_price(q, sigma, obs, r, t_k) - obs.price, 0.0, 1.0,
                          xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    residual = _intra_price(rho, sigma, obs, r, t_k) - obs.price
    if abs(residual) > tol:
        raise NumericalError(f"rho solve left residual {residual:.3g}")
    h = 1e-5
    a, b = max(rho - h, 0.0), min(rho + h, 1.0)
    slope = (_intra_price(b, sigma, obs, r, t_k) - _intra_price(a, sigma, obs, r, t_k)) / (b - a)
    if abs(slope) < 1e-6 * face:
        warnings.warn(
            f"debt price is nearly flat in rho at t={obs.t} (dD/drho={slope:.3g}); "
            "observations closer to the next report date carry more information",
            IllConditionedWarning, stacklevel=2)
    return float(rho)


# -- full procedure ----------------------------------------------------------------------


def _least_squares(fun, x0, bounds):
    res = optimize.least_squares(fun, x0, bounds=bounds, method="trf",
                                 xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=500)
    return float(res.x[0]), res


def calibrate(observations: Sequence[MarketObservation], r: float,
              schedule: ReportSchedule) -> CalibrationResult:
    """Two-stage calibration: sigma from report dates, then rho from the rest.

    With one observation per stage the price equation is solved exactly;
    with several, the stage is a bounded least-squares fit over the
    residual prices. ``rho_hat`` is ``None`` when there are no intra-period
    observations.
    """
    for obs in observations:
        obs.claim.check(schedule)
        obs.check_bounds(r)
        if obs.at_report_date != (obs.t in schedule):
            raise ValidationError(f"at_report_date flag disagrees with the schedule at t={obs.t}")
    report = [o for o in observations if o.at_report_date]
    intra = [o for o in observations if not o.at_report_date]
    if not report:
        raise ValidationError("at least one report-date observation is needed to fix sigma")
    diagnostics = {"n_report": len(report), "n_intra": len(intra)}

    if len(report) == 1:
        sigma = implied_sigma(report[0], r)
        diagnostics["sigma_method"] = "brentq"
    else:
        x0 = _starting_sigma(report, r)

        def sigma_residuals(x):
            return [(_report_price(x[0], o, r) - o.price) / o.claim.face for o in report]

        sigma, res = _least_squares(sigma_residuals, [x0], (1e-8, SIGMA_CEILING))
        diagnostics.update(sigma_method="least_squares", sigma_nfev=int(res.nfev),
                           sigma_status=int(res.status))

    rho = None
    if len(intra) == 1:
        rho = implied_rho(intra[0], sigma, r, schedule)
        diagnostics["rho_method"] = "brentq"
    elif intra:
        last = {id(o): schedule.last_report(o.t) for o in intra}

        def rho_residuals(x):
            return [(_intra_price(x[0], sigma, o, r, last[id(o)]) - o.price) / o.claim.face
                    for o in intra]

        # coarse scan for a start point; the objective need not be convex in rho
        scan = np.linspace(0.02, 1.0, 50)
        start = scan[int(np.argmin([np.sum(np.square(rho_residuals([q]))) for q in scan]))]
        rho, res = _least_squares(rho_residuals, [start], (1e-8, 1.0))
        diagnostics.update(rho_method="least_squares", rho_nfev=int(res.nfev),
                           rho_status=int(res.status))
    else:
        diagnostics["rho_method"] = "unidentified"

    residuals = []
    for o in observations:
        if o.at_report_date:
            model = _report_price(sigma, o, r)
        elif rho is None:
            residuals.append(math.nan)
            continue
        else:
            model = _intra_price(rho, sigma, o, r, schedule.last_report(o.t))
        residuals.append(model - o.price)
    return CalibrationResult(float(sigma), rho, tuple(residuals), diagnostics)


def _starting_sigma(report, r):
    for o in report:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", IllConditionedWarning)
                return implied_sigma(o, r)
        except NumericalError:
            continue
    return 0.3


# -- spread decomposition ----------------------------------------------------------------


def model_price(obs: MarketObservation, sigma: float, rho: float | None, r: float,
                schedule: ReportSchedule) -> float:
    if obs.at_report_date:
        return _report_price(sigma, obs, r)
    if rho is None:
        raise ValidationError(f"rho is unidentified; cannot price the intra-period row t={obs.t}")
    return _intra_price(rho, sigma, obs, r, schedule.last_report(obs.t))


def decompose_spread(obs: MarketObservation, sigma_hat: float, rho_hat: float | None,
                     r: float, schedule: ReportSchedule) -> SpreadDecomposition:
    """Split the model spread at ``obs`` into default and transparency parts.

    The default part is the spread the same firm would pay under full
    observation (rho = 1); the transparency part is the excess over it.
    """
    face = obs.claim.face
    full = spread_from_price(model_price(obs, sigma_hat, 1.0, r, schedule), face, r, obs.horizon)
    if obs.at_report_date:
        return SpreadDecomposition(obs.t, full, 0.0)
    total = spread_from_price(model_price(obs, sigma_hat, rho_hat, r, schedule), face, r,
                              obs.horizon)
    return SpreadDecomposition(obs.t, full, total - full)


# -- synthetic data ------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticMarket:
    observations: tuple[MarketObservation, ...]
    params_true: ModelParams
    seed: int


def generate_synthetic_market(params_true: ModelParams, schedule: ReportSchedule,
                              claim: DebtClaim, observation_times: Sequence[float],
                              noise: float = 0.0, seed: int = 0) -> SyntheticMarket:
    """Observed debt prices along one simulated P-path.

    Prices are model prices given the path's market value ``V'_t``; with
    ``noise > 0`` each is multiplied by ``exp(noise * N(0, 1))``.
    """
    claim.check(schedule)
    times = sorted(float(t) for t in observation_times)
    if not times or times[0] < 0 or times[-1] >= claim.maturity:
        raise ValidationError("observation times must lie in [0, maturity)")
    if noise < 0:
        raise ValidationError("noise must be >= 0")
    grid = sorted(set(times) | {0.0})
    path = sample_paths(params_true, schedule, grid, 1, "P", seed)
    shocks = batch_rng(seed, 0, stream=7).standard_normal(len(times))
    observations = []
    for t, shock in zip(times, shocks):
        v_prime = float(path.v_filtered[0, grid.index(t)])
        ctx = PricingContext.from_market_value(params_true, schedule, t, v_prime)
        price = debt_price_closed_form(ctx, claim)
        if noise:
            price *= math.exp(noise * shock)
        observations.append(MarketObservation(t, price, t in schedule, claim, v_prime))
    return SyntheticMarket(tuple(observations), params_true, seed)
