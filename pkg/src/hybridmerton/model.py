"""Firm value, market (filtered) value and state-price density.

The true firm value ``V`` is driven by a Wiener process ``W`` that the
market never sees directly. The market sees a second Wiener process ``W'``
with ``<W, W'>_t = rho * t`` and, at each accounting report date, the exact
firm value. Between reports it carries the filtered value ``V'``.

All process functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .exceptions import DegenerateParameterError, ScheduleLookupError, ValidationError

Measure = Literal["P", "Q"]

#: Paths generated per random substream. Results do not depend on how
#: batches are scheduled, only on (seed, batch index).
BATCH_SIZE = 1 << 16


@dataclass(frozen=True)
class ModelParams:
    """Model parameters.

    Parameters
    ----------
    v0 : float
        Initial firm value, > 0.
    mu : float
        Drift of the firm value under the physical measure P.
    sigma : float
        Firm value volatility, >= 0.
    r : float
        Constant risk-free rate.
    rho : float
        Transparency parameter in (0, 1]; ``rho = 1`` is full observation.
    """

    v0: float
    mu: float
    sigma: float
    r: float
    rho: float

    def __post_init__(self):
        for name in ("v0", "mu", "sigma", "r", "rho"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value!r}")
        if self.v0 <= 0:
            raise ValidationError(f"v0 must be > 0, got {self.v0!r}")
        if self.sigma < 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma!r}")
        if not 0 < self.rho <= 1:
            raise ValidationError(f"rho must lie in (0, 1], got {self.rho!r}")

    @property
    def theta(self) -> float:
        """Market price of risk carried by ``W'``: ``-(mu - r) / (sigma * rho)``."""
        scale = self.sigma * self.rho
        if scale == 0:
            raise DegenerateParameterError("theta is undefined when sigma * rho == 0")
        theta = -(self.mu - self.r) / scale
        if not math.isfinite(theta):
            raise DegenerateParameterError(f"theta is not finite for {self}")
        return theta


@dataclass(frozen=True)
class ReportSchedule:
    """Strictly increasing accounting report dates, starting at 0."""

    dates: tuple[float, ...]

    def __init__(self, dates):
        dates = tuple(float(d) for d in dates)
        if not dates or dates[0] != 0.0:
            raise ValidationError("report schedule must start at t0 = 0")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValidationError(f"report dates must be strictly increasing: {dates}")
        object.__setattr__(self, "dates", dates)

    def __contains__(self, t) -> bool:
        return float(t) in self.dates

    def __len__(self) -> int:
        return len(self.dates)

    def index(self, t: float) -> int:
        """Index k of the last report date t_k <= t."""
        if t < 0 or not math.isfinite(t):
            raise ScheduleLookupError(f"time {t!r} is outside the report schedule")
        return bisect.bisect_right(self.dates, t) - 1

    def lookup(self, t: float) -> tuple[float, float]:
        """Return ``(t_k, t_{k+1})`` with ``t_k <= t < t_{k+1}``.

        Past the last listed date the next report is ``inf``.
        """
        k = self.index(t)
        upper = self.dates[k + 1] if k + 1 < len(self.dates) else math.inf
        return self.dates[k], upper

    def last_report(self, t: float) -> float:
        return self.dates[self.index(t)]


@dataclass(frozen=True)
class DebtClaim:
    """Zero-coupon debt with face value ``face`` due at report date ``maturity``."""

    face: float
    maturity: float

    def __post_init__(self):
        if not (math.isfinite(self.face) and self.face >= 0):
            raise ValidationError(f"face must be finite and >= 0, got {self.face!r}")
        if not (math.isfinite(self.maturity) and self.maturity > 0):
            raise ValidationError(f"maturity must be > 0, got {self.maturity!r}")

    def check(self, schedule: ReportSchedule) -> "DebtClaim":
        if self.maturity not in schedule:
            raise ValidationError(
                f"maturity {self.maturity!r} is not a report date in {schedule.dates}"
            )
        return self


@dataclass(frozen=True, eq=False)
class PathBundle:
    """Sampled paths on ``grid``; every array has shape ``(n_paths, len(grid))``."""

    grid: np.ndarray
    w: np.ndarray
    w_prime: np.ndarray
    v: np.ndarray
    v_filtered: np.ndarray
    z: np.ndarray
    measure: Measure
    seed: int
    params: ModelParams = field(repr=False)

    @property
    def n_paths(self) -> int:
        return self.w.shape[0]


def firm_value(params: ModelParams, t, w_t):
    """True firm value ``V0 exp((mu - sigma^2/2) t + sigma W_t)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValidationError("firm_value requires t >= 0")
    drift = params.mu - 0.5 * params.sigma**2
    return params.v0 * np.exp(drift * t + params.sigma * np.asarray(w_t, dtype=float))


def filtered_value(params: ModelParams, schedule: ReportSchedule, t, v_at_last_report,
                   wprime_increment):
    """Market value of the firm ``E[V_t | G_t]`` for scalar ``t``.

    ``wprime_increment`` is ``W'_t - W'_{t_k}`` with ``t_k`` the last report
    date; at ``t = t_k`` this is zero and the result is the reported value.
    """
    t_k = schedule.last_report(float(t))
    v_at_last_report = np.asarray(v_at_last_report, dtype=float)
    if np.any(v_at_last_report <= 0):
        raise ValidationError("v_at_last_report must be > 0")
    sr = params.sigma * params.rho
    exponent = (params.mu - 0.5 * sr**2) * (t - t_k) + sr * np.asarray(wprime_increment, dtype=float)
    return v_at_last_report * np.exp(exponent)


def state_price_density(params: ModelParams, t, wprime_t):
    """``Z_t = exp(theta W'_t - theta^2 t / 2 - r t)``."""
    theta = params.theta
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValidationError("state_price_density requires t >= 0")
    return np.exp(theta * np.asarray(wprime_t, dtype=float) - 0.5 * theta**2 * t - params.r * t)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] != 0.0:
        raise ValidationError("grid must be a 1-d sequence of times starting at 0")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("grid must be strictly increasing")
    return grid


def simulation_grid(schedule: ReportSchedule, grid) -> tuple[np.ndarray, np.ndarray]:
    """Merge report dates into ``grid``.

    Returns the merged grid and the positions of the original grid nodes in
    it. Report dates are needed as anchors for the filtered value.
    """
    grid = _check_grid(grid)
    reports = [d for d in schedule.dates if d <= grid[-1]]
    merged = np.union1d(grid, reports)
    return merged, np.searchsorted(merged, grid)


def batch_rng(seed: int, batch: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, stream, batch)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, batch)))


def generate_batch(params: ModelParams, schedule: ReportSchedule, grid, n: int,
                   rng: np.random.Generator, measure: Measure = "P", *,
                   theta: float | None = None, filter_params: ModelParams | None = None):
    """Sample ``n`` joint paths of (W, W', V, V', Z) exactly on ``grid``.

    ``theta`` overrides the drift used to build ``W'`` under Q and
    ``filter_params`` the parameters plugged into the filtered-value formula;
    both exist so that Monte Carlo checks can run negative controls. Returns a
    dict of arrays with shape ``(n, len(grid))``.
    """
    merged, keep = simulation_grid(schedule, grid)
    dt = np.diff(merged)
    rho = params.rho
    # W = rho W' + sqrt(1 - rho^2) W'', W'' independent of W'
    dwp = rng.standard_normal((n, dt.size)) * np.sqrt(dt)
    dwpp = rng.standard_normal((n, dt.size)) * np.sqrt(dt)
    zeros = np.zeros((n, 1))
    w_prime = np.hstack([zeros, np.cumsum(dwp, axis=1)])
    w_second = np.hstack([zeros, np.cumsum(dwpp, axis=1)])
    if measure == "Q":
        # W' = W~' + theta t with W~' a Q-Wiener process
        w_prime = w_prime + (params.theta if theta is None else theta) * merged
    elif measure != "P":
        raise ValidationError(f"measure must be 'P' or 'Q', got {measure!r}")
    w = rho * w_prime + math.sqrt(max(0.0, 1.0 - rho * rho)) * w_second
    v = firm_value(params, merged, w)

    fp = params if filter_params is None else filter_params
    sr = fp.sigma * fp.rho
    anchor = np.array([merged.searchsorted(schedule.last_report(t), side="left") for t in merged])
    elapsed = merged - merged[anchor]
    v_filtered = v[:, anchor] * np.exp((fp.mu - 0.5 * sr**2) * elapsed
                                       + sr * (w_prime - w_prime[:, anchor]))
    z = state_price_density(params, merged, w_prime)
    return {
        "w": w[:, keep],
        "w_prime": w_prime[:, keep],
        "v": v[:, keep],
        "v_filtered": v_filtered[:, keep],
        "z": z[:, keep],
    }


def sample_paths(params: ModelParams, schedule: ReportSchedule, grid, n_paths: int,
                 measure: Measure = "P", seed: int = 0) -> PathBundle:
    """Sample ``n_paths`` paths on ``grid`` under ``measure``.

    Increments are exact lognormal transitions, so grid values carry no
    discretisation error. Paths are produced in batches of ``BATCH_SIZE``
    with one substream per batch, which makes the output a function of
    ``(seed, n_paths)`` alone.
    """
    grid = _check_grid(grid)
    if n_paths < 1:
        raise ValidationError("n_paths must be >= 1")
    params.theta  # fail early on sigma * rho == 0
    parts = []
    for b, start in enumerate(range(0, n_paths, BATCH_SIZE)):
        n = min(BATCH_SIZE, n_paths - start)
        parts.append(generate_batch(params, schedule, grid, n, batch_rng(seed, b), measure))
    arrays = {k: np.vstack([p[k] for p in parts]) for k in parts[0]}
    return PathBundle(grid=grid, measure=measure, seed=seed, params=params, **arrays)
