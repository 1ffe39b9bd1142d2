"""Pricing of claims on the firm value seen from the market's information.

Conditional on market information at ``t`` (last report ``t_k``), the firm
value at a later report date ``t_n`` is, under Q,

    V_{t_n} = V'_t * exp(tau + nu * Z),   Z ~ N(0, 1)

with

    tau = -sigma^2/2 (t_n - t_k) + (sigma rho)^2/2 (t - t_k) + r (t_n - t)
    nu  = sigma * sqrt((t_n - t_k) - rho^2 (t - t_k)).

Note ``tau + nu^2 / 2 = r (t_n - t)``, so debt is a Merton-type put
spread with volatility ``nu``. At a report date ``t = t_k`` neither term
involves ``rho``.

The debt closed form is

    D = V' Phi(alpha) - face e^{-r T} Phi(alpha + nu) + face e^{-r T}
    alpha = (log(face / V') - tau) / nu - nu

The ``- nu`` shift in ``alpha`` is required for the closed form to equal
the Gaussian integral of ``min(face, V_{t_n})``; at report dates ``alpha``
reduces to ``(log(face / V) - (r + sigma^2/2) T) / (sigma sqrt(T))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import integrate
from scipy.special import ndtr

from .exceptions import QuadratureError, ValidationError
from .model import DebtClaim, ModelParams, ReportSchedule, filtered_value

SQRT_2PI = math.sqrt(2.0 * math.pi)
# |z| beyond this carries Gaussian mass below 1e-32
Z_CUTOFF = 12.0


class TauNu(NamedTuple):
    tau: float
    nu: float


@dataclass(frozen=True)
class PricingContext:
    """Market state at valuation time ``t``.

    Build it from a path state (last report value and ``W'`` increment since
    that report) or, via :meth:`from_market_value`, directly from an
    observed market value of the firm.
    """

    params: ModelParams
    schedule: ReportSchedule
    t: float
    last_report_value: float | None = None
    wprime_increment: float = 0.0
    market_value: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ValidationError(f"valuation time must be >= 0, got {self.t!r}")
        if self.market_value is None:
            if self.last_report_value is None or not self.last_report_value > 0:
                raise ValidationError("last_report_value must be > 0")
            if self.t in self.schedule and self.wprime_increment != 0:
                raise ValidationError("wprime_increment must be 0 at a report date")
        elif not self.market_value > 0:
            raise ValidationError(f"market_value must be > 0, got {self.market_value!r}")

    @classmethod
    def from_market_value(cls, params, schedule, t, v_prime):
        return cls(params, schedule, float(t), market_value=float(v_prime))

    @property
    def t_k(self) -> float:
        return self.schedule.last_report(self.t)

    @property
    def at_report_date(self) -> bool:
        return self.t in self.schedule

    @property
    def v_prime(self) -> float:
        if self.market_value is not None:
            return self.market_value
        return float(filtered_value(self.params, self.schedule, self.t,
                                    self.last_report_value, self.wprime_increment))


def _tau_nu(sigma, rho, r, t_k, s, t_n):
    radicand = (t_n - t_k) - rho**2 * (s - t_k)
    if np.any(np.asarray(radicand) < 0):
        raise ValidationError(f"negative variance {radicand!r}: need t_k <= s <= t_n and rho <= 1")
    tau = -0.5 * sigma**2 * (t_n - t_k) + 0.5 * (sigma * rho) ** 2 * (s - t_k) + r * (t_n - s)
    return tau, sigma * np.sqrt(radicand)


def tau_nu(params: ModelParams, t_k: float, s: float, t_n: float) -> TauNu:
    """Drift adjustment and effective volatility of ``log(V_{t_n} / V'_s)``."""
    if not t_k <= s <= t_n:
        raise ValidationError(f"need t_k <= s <= t_n, got {t_k}, {s}, {t_n}")
    tau, nu = _tau_nu(params.sigma, params.rho, params.r, t_k, s, t_n)
    return TauNu(float(tau), float(nu))


def normal_cdf(x):
    """Standard normal distribution function."""
    return ndtr(x)


def _check_horizon(ctx: PricingContext, t_n: float) -> None:
    if t_n not in ctx.schedule:
        raise ValidationError(f"t_n={t_n!r} is not a report date")
    if not ctx.t < t_n:
        raise ValidationError(f"valuation time {ctx.t!r} must precede t_n={t_n!r}")


@lru_cache(maxsize=8)
def _gauss_hermite(order: int):
    nodes, weights = hermegauss(order)
    return nodes, weights / SQRT_2PI


def price_claim_quadrature(ctx: PricingContext, payoff: Callable, t_n: float, *,
                           kinks: Sequence[float] = (), order: int = 128,
                           atol: float = 1e-10) -> float:
    """Discounted Gaussian integral of ``payoff(V_{t_n})`` given ``ctx``.

    ``payoff`` must be bounded and accept numpy arrays as well as floats.
    Smooth payoffs are integrated by Gauss-Hermite at ``order`` and
    ``2 * order`` nodes; when the two disagree by more than ``atol``, or when
    ``kinks`` (payoff breakpoints in currency units) are given, adaptive
    quadrature with the kinks as breakpoints takes over.
    """
    _check_horizon(ctx, t_n)
    p = ctx.params
    tau, nu = tau_nu(p, ctx.t_k, ctx.t, t_n)
    v_prime = ctx.v_prime
    disc = math.exp(-p.r * (t_n - ctx.t))
    if nu == 0.0:
        return disc * float(payoff(v_prime * math.exp(tau)))

    if not kinks:
        estimates = []
        for n in (order, 2 * order):
            x, w = _gauss_hermite(n)
            values = np.asarray(payoff(v_prime * np.exp(tau + nu * x)), dtype=float)
            estimates.append(disc * float(np.dot(w, values)))
        if abs(estimates[1] - estimates[0]) <= atol:
            return estimates[1]

    points = sorted(
        (math.log(k / v_prime) - tau) / nu for k in kinks if k > 0
    )
    points = [z for z in points if -Z_CUTOFF < z < Z_CUTOFF]

    def integrand(z):
        return float(payoff(v_prime * math.exp(tau + nu * z))) * math.exp(-0.5 * z * z) / SQRT_2PI

    value, err = integrate.quad(integrand, -Z_CUTOFF, Z_CUTOFF, points=points or None,
                                epsabs=0.1 * atol / disc, epsrel=0.0, limit=1000)
    if disc * err > atol:
        raise QuadratureError(
            f"quadrature did not reach atol={atol:g}; estimated error {disc * err:.3g}",
            achieved_error=disc * err,
        )
    return disc * value


def _debt_value(v_prime, face, disc, tau, nu):
    """Debt value from (tau, nu); vectorised, requires nu > 0 and face > 0."""
    alpha = (np.log(face / v_prime) - tau) / nu - nu
    return v_prime * ndtr(alpha) - face * disc * ndtr(alpha + nu) + face * disc


def _equity_value(v_prime, face, disc, tau, nu):
    alpha = (np.log(face / v_prime) - tau) / nu - nu
    return v_prime * ndtr(-alpha) - face * disc * ndtr(-alpha - nu)


def debt_price_report_date(v: float, face: float, r: float, sigma: float,
                           horizon: float) -> float:
    """Debt value at a report date; depends on (V, face, r, sigma, T) only."""
    disc = math.exp(-r * horizon)
    if face == 0:
        return 0.0
    if sigma == 0:
        return disc * min(face, v * math.exp(r * horizon))
    vol = sigma * math.sqrt(horizon)
    beta = (math.log(face / v) - (r + 0.5 * sigma**2) * horizon) / vol
    return float(v * ndtr(beta) - face * disc * ndtr(beta + vol) + face * disc)


def _debt_inputs(ctx: PricingContext, claim: DebtClaim):
    claim.check(ctx.schedule)
    _check_horizon(ctx, claim.maturity)
    tau, nu = tau_nu(ctx.params, ctx.t_k, ctx.t, claim.maturity)
    disc = math.exp(-ctx.params.r * (claim.maturity - ctx.t))
    return ctx.v_prime, disc, tau, nu


def debt_price_closed_form(ctx: PricingContext, claim: DebtClaim) -> float:
    """Market value of the nearest-maturity debt ``min(face, V_maturity)``."""
    v_prime, disc, tau, nu = _debt_inputs(ctx, claim)
    if claim.face == 0:
        return 0.0
    if nu == 0.0:
        return disc * min(claim.face, v_prime * math.exp(tau))
    return float(_debt_value(v_prime, claim.face, disc, tau, nu))


def equity_price_closed_form(ctx: PricingContext, claim: DebtClaim) -> float:
    """Value of the residual claim ``(V_maturity - face)^+``."""
    v_prime, disc, tau, nu = _debt_inputs(ctx, claim)
    if claim.face == 0:
        return v_prime
    if nu == 0.0:
        return disc * max(v_prime * math.exp(tau) - claim.face, 0.0)
    return float(_equity_value(v_prime, claim.face, disc, tau, nu))


def spread_from_price(price: float, face: float, r: float, horizon: float) -> float:
    """Continuously compounded yield spread over ``r`` of a zero-coupon price."""
    if not price > 0:
        raise ValidationError(f"debt price must be > 0 to define a spread, got {price!r}")
    if not horizon > 0:
        raise ValidationError("horizon must be > 0")
    return -math.log(price / face) / horizon - r


def credit_spread(ctx: PricingContext, claim: DebtClaim) -> float:
    price = debt_price_closed_form(ctx, claim)
    return spread_from_price(price, claim.face, ctx.params.r, claim.maturity - ctx.t)
