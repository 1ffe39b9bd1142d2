"""Monte Carlo checks of the model's pricing identities.

Everything here is built from the firm-value definition and the coupling
``W = rho W' + sqrt(1 - rho^2) W''`` only. Nothing imports the closed forms
or ``tau``/``nu``, so agreement with :mod:`hybridmerton.pricing` is an
independent confirmation.

Moment accumulation is done per batch and combined with ``math.fsum``;
each batch draws from its own substream keyed on ``(seed, batch)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .exceptions import ModelInconsistencyError, ValidationError
from .model import (
    ModelParams,
    ReportSchedule,
    batch_rng,
    firm_value,
    generate_batch,
)

Z_LIMIT = 3.0


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 1_000_000
    batch: int = 1 << 17
    seed: int = 0
    grid: tuple[float, ...] | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_paths < 1 or self.batch < 1:
            raise ValidationError("n_paths and batch must be >= 1")

    def batches(self):
        for b, start in enumerate(range(0, self.n_paths, self.batch)):
            yield b, min(self.batch, self.n_paths - start)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int

    @property
    def interval(self) -> tuple[float, float]:
        return self.mean - 3 * self.std_error, self.mean + 3 * self.std_error

    def z_score(self, reference: float) -> float:
        return _z(self.mean - reference, self.std_error)


def _z(diff: float, se: float) -> float:
    if se == 0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return diff / se


class _Moments:
    """Mean and standard error of several sample columns, merged across batches."""

    def __init__(self):
        self._parts = []

    def add(self, samples: np.ndarray) -> None:
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        # exact column sums; numpy's axis-0 reduction accumulates naively row by row
        n = samples.shape[0]
        sums = np.array([math.fsum(col) for col in samples.T])
        mean = sums / n
        m2 = np.array([math.fsum(col) for col in ((samples - mean) ** 2).T])
        self._parts.append((n, sums, m2, mean))

    def finish(self):
        n = sum(p[0] for p in self._parts)
        k = self._parts[0][1].size
        means = np.array([math.fsum(p[1][j] for p in self._parts) / n for j in range(k)])
        m2 = np.array([
            math.fsum(p[2][j] for p in self._parts)
            + math.fsum(p[0] * (p[3][j] - means[j]) ** 2 for p in self._parts)
            for j in range(k)
        ])
        se = np.sqrt(m2 / (n - 1) / n) if n > 1 else np.zeros(k)
        return n, means, se


def _run(cfg: McConfig, fn: Callable[[int, int], np.ndarray]):
    """Evaluate ``fn(batch_index, batch_size)`` over all batches, in order."""
    moments = _Moments()
    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            for out in pool.map(lambda bn: fn(*bn), cfg.batches()):
                moments.add(out)
    else:
        for b, n in cfg.batches():
            moments.add(fn(b, n))
    return moments.finish()


# -- conditional forward simulation ------------------------------------------------


@dataclass(frozen=True)
class MarketState:
    """Market information at ``t``: last reported value and ``W'`` since that report."""

    t: float
    last_report_value: float
    wprime_increment: float = 0.0


@dataclass
class PathReports:
    """Firm values and accumulated ``W'`` at the report dates after the valuation time.

    ``wprime`` is ``W'_date - W'_t``; under Q it includes the ``theta`` drift.
    """

    v: dict
    wprime: dict
    t_n: float
    state: MarketState = field(repr=False)

    @property
    def terminal(self):
        return self.v[self.t_n]


def terminal_payoff(f: Callable) -> Callable[[PathReports], np.ndarray]:
    """Lift ``f(V_{t_n})`` to a path payoff."""
    return lambda rep: f(rep.terminal)


def _forward(params: ModelParams, schedule: ReportSchedule, state: MarketState, t_n: float,
             normals_wp: np.ndarray, normals_wpp: np.ndarray, wp_drift: float):
    """Report-date values after ``state.t`` built from standard normals.

    Column ``j`` of the normal arrays drives segment ``j``, i.e. the report
    interval ending at ``dates[j]``. Returns (v, wprime, segment data).
    """
    t_k = schedule.last_report(state.t)
    dates = [d for d in schedule.dates if state.t < d <= t_n]
    rho, sigma = params.rho, params.sigma
    comp = math.sqrt(max(0.0, 1.0 - rho * rho))
    v, wprime, segments = {}, {}, []
    v_prev = np.full(normals_wp.shape[0], state.last_report_value)
    wp_total = np.zeros(normals_wp.shape[0])
    start, known = t_k, state.wprime_increment
    for j, d in enumerate(dates):
        observed_from = max(start, state.t)
        dwp = normals_wp[:, j] * math.sqrt(d - observed_from) + wp_drift * (d - observed_from)
        dwpp = normals_wpp[:, j] * math.sqrt(d - start)
        dw = rho * (known + dwp) + comp * dwpp
        # firm_value scaled to start from v_prev over a horizon d - start
        v_d = v_prev * firm_value(params, d - start, dw) / params.v0
        segments.append((start, d, v_prev, known + dwp))
        wp_total = wp_total + dwp
        v[d], wprime[d] = v_d, wp_total
        v_prev, start, known = v_d, d, 0.0
    return v, wprime, segments


@dataclass(frozen=True)
class McPriceResult:
    q_estimate: McEstimate
    p_estimate: McEstimate
    difference: McEstimate

    @property
    def z(self) -> float:
        return self.difference.z_score(0.0)

    @property
    def agree(self) -> bool:
        return abs(self.z) <= Z_LIMIT


def _check_state(schedule, state, t_n):
    if t_n not in schedule:
        raise ValidationError(f"t_n={t_n!r} is not a report date")
    if not state.t < t_n:
        raise ValidationError("valuation time must precede t_n")
    if state.t in schedule and state.wprime_increment != 0:
        raise ValidationError("wprime_increment must be 0 at a report date")


def mc_price(params: ModelParams, schedule: ReportSchedule, claim_payoff: Callable,
             t_n: float, cfg: McConfig, state: MarketState | None = None, *,
             strict: bool = True) -> McPriceResult:
    """Price a claim paid at ``t_n`` two ways from the same normals.

    * Q form: ``e^{-r (t_n - t)} E^Q[X | G_t]`` with ``W' = W~' + theta t``.
    * P form: ``E[(Z_{t_n} / Z_t) X | G_t]`` with ``W'`` driftless.

    ``claim_payoff`` receives a :class:`PathReports`. With ``strict`` a
    disagreement beyond 3 standard errors of the paired difference raises
    :class:`ModelInconsistencyError`.
    """
    state = state or MarketState(0.0, params.v0)
    _check_state(schedule, state, t_n)
    theta, r = params.theta, params.r
    horizon = t_n - state.t
    disc = math.exp(-r * horizon)
    n_seg = sum(1 for d in schedule.dates if state.t < d <= t_n)

    def batch(b, n):
        rng = batch_rng(cfg.seed, b, stream=1)
        g1 = rng.standard_normal((n, n_seg))
        g2 = rng.standard_normal((n, n_seg))
        vq, wq, _ = _forward(params, schedule, state, t_n, g1, g2, theta)
        vp, wp, _ = _forward(params, schedule, state, t_n, g1, g2, 0.0)
        xq = disc * np.broadcast_to(claim_payoff(PathReports(vq, wq, t_n, state)), (n,))
        density = np.exp(theta * wp[t_n] - 0.5 * theta**2 * horizon - r * horizon)
        xp = density * np.broadcast_to(claim_payoff(PathReports(vp, wp, t_n, state)), (n,))
        return np.column_stack([xq, xp, xp - xq])

    n, means, se = _run(cfg, batch)
    est = [McEstimate(float(m), float(s), n, cfg.seed) for m, s in zip(means, se)]
    result = McPriceResult(*est)
    if strict and not result.agree:
        raise ModelInconsistencyError(
            f"P and Q estimators disagree: {est[1].mean:.8g} vs {est[0].mean:.8g} (z={result.z:.2f})"
        )
    return result


# -- check reports -------------------------------------------------------------------


@dataclass(frozen=True)
class CheckRow:
    name: str
    estimate: float
    reference: float
    std_error: float
    z: float

    @property
    def passed(self) -> bool:
        return abs(self.z) <= Z_LIMIT


@dataclass(frozen=True)
class CheckReport:
    check: str
    rows: tuple[CheckRow, ...]
    n_paths: int
    seed: int

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def max_abs_z(self) -> float:
        return max(abs(row.z) for row in self.rows)

    def to_text(self) -> str:
        """One tab-separated line per row: check, name, estimate, SE, z, PASS/FAIL."""
        lines = ["check\tname\testimate\treference\tstd_error\tz\tresult"]
        for row in self.rows:
            lines.append(
                f"{self.check}\t{row.name}\t{row.estimate!r}\t{row.reference!r}\t"
                f"{row.std_error!r}\t{row.z:.4f}\t{'PASS' if row.passed else 'FAIL'}"
            )
        return "\n".join(lines)


def _row(name, n_means_se, j, reference=0.0):
    _, means, se = n_means_se
    est = float(means[j])
    return CheckRow(name, est, reference, float(se[j]), _z(est - reference, float(se[j])))


NEGATIVE_CONTROLS = ("flip_theta", "wrong_rho", "wrong_drift")


def _controlled(params: ModelParams, control: str | None):
    """(theta used for Q paths, params used inside the filtered-value formula)."""
    if control is None:
        return params.theta, params
    if control == "flip_theta":
        return -params.theta, params
    if control == "wrong_rho":
        wrong = params.rho - 0.3 if params.rho > 0.5 else params.rho + 0.3
        return params.theta, replace(params, rho=wrong)
    if control == "wrong_drift":
        # risk-neutral drift plugged into a formula driven by the P-Wiener W'
        return params.theta, replace(params, mu=params.r)
    raise ValidationError(f"unknown negative control {control!r}; choose from {NEGATIVE_CONTROLS}")


def _default_grid(schedule: ReportSchedule, periods: int = 2, per_period: int = 4):
    if len(schedule) < periods + 1:
        raise ValidationError(f"need at least {periods + 1} report dates")
    pts = []
    for a, b in zip(schedule.dates[:periods], schedule.dates[1:periods + 1]):
        pts.extend(np.linspace(a, b, per_period, endpoint=False))
    pts.append(schedule.dates[periods])
    return tuple(float(p) for p in pts)


def check_martingale_filtered_value(params: ModelParams, schedule: ReportSchedule,
                                    cfg: McConfig, *, control: str | None = None) -> CheckReport:
    """``V'_t e^{-rt}`` is a Q-martingale in the market filtration.

    Unconditional rows test ``E^Q[V'_t e^{-rt}] = V0`` at each grid time.
    Instrumented rows test ``E^Q[(M_t - M_s) h_s] = 0`` for consecutive grid
    times ``s < t`` and market-measurable instruments ``h_s`` in
    {1, W'_s / sqrt(s), V_{t_k(s)} / V0 - 1}. ``control`` injects one of
    :data:`NEGATIVE_CONTROLS`, which the check should reject.
    """
    grid = np.asarray(cfg.grid if cfg.grid is not None else _default_grid(schedule))
    if sum(1 for d in schedule.dates if d <= grid[-1]) < 2:
        raise ValidationError("grid must include at least two report dates")
    theta, filter_params = _controlled(params, control)
    disc = np.exp(-params.r * grid)
    anchors = [int(np.searchsorted(grid, schedule.last_report(s))) for s in grid]
    reports_on_grid = all(grid[a] == schedule.last_report(s) for a, s in zip(anchors, grid))
    names = [f"E[M({t:g})]" for t in grid[1:]]
    pairs = list(zip(range(len(grid) - 1), range(1, len(grid))))
    for s_idx, t_idx in pairs:
        s, t = grid[s_idx], grid[t_idx]
        names.append(f"E[dM({s:g}->{t:g})*1]")
        if s > 0:
            names.append(f"E[dM({s:g}->{t:g})*W'(s)]")
            if reports_on_grid and grid[anchors[s_idx]] > 0:
                names.append(f"E[dM({s:g}->{t:g})*V(t_k)]")

    def batch(b, n):
        paths = generate_batch(params, schedule, grid, n, batch_rng(cfg.seed, b, stream=2), "Q",
                               theta=theta, filter_params=filter_params)
        m = paths["v_filtered"] * disc
        cols = [m[:, j] for j in range(1, grid.size)]
        for s_idx, t_idx in pairs:
            s = grid[s_idx]
            dm = m[:, t_idx] - m[:, s_idx]
            cols.append(dm)
            if s > 0:
                cols.append(dm * paths["w_prime"][:, s_idx] / math.sqrt(s))
                if reports_on_grid and grid[anchors[s_idx]] > 0:
                    cols.append(dm * (paths["v"][:, anchors[s_idx]] / params.v0 - 1.0))
        return np.column_stack(cols)

    stats = _run(cfg, batch)
    rows = [_row(names[j], stats, j, params.v0 if j < grid.size - 1 else 0.0)
            for j in range(len(names))]
    label = "martingale_filtered_value" + (f"[{control}]" if control else "")
    return CheckReport(label, tuple(rows), stats[0], cfg.seed)


def check_filtering_identity(params: ModelParams, schedule: ReportSchedule, cfg: McConfig, *,
                             t: float | None = None, n_bins: int = 4,
                             min_per_bin: int = 30) -> CheckReport:
    """``E[V_t | G_t] = V'_t`` by binning on (V_{t_k}, W'_t - W'_{t_k}).

    Paths are simulated under P. Each bin row tests that the mean of
    ``V_t - V'_t`` inside the bin is zero. ``t`` defaults to the middle of
    the second report period so that ``V_{t_k}`` is random.
    """
    if t is None:
        if len(schedule) < 3:
            raise ValidationError("need at least three report dates for the default time")
        t = 0.5 * (schedule.dates[1] + schedule.dates[2])
    t_k = schedule.last_report(t)
    grid = sorted({0.0, t_k, float(t)})
    params.theta  # paths carry Z, which needs sigma * rho != 0

    # one pass for bin edges (quantiles), one pass for the binned moments
    pilot = generate_batch(params, schedule, grid, min(cfg.n_paths, 1 << 16),
                           batch_rng(cfg.seed, 0, stream=4), "P")
    j_k, j_t = grid.index(t_k), grid.index(float(t))
    qs = np.linspace(0, 1, n_bins + 1)[1:-1]
    edges_v = np.quantile(pilot["v"][:, j_k], qs)
    edges_w = np.quantile(pilot["w_prime"][:, j_t] - pilot["w_prime"][:, j_k], qs)

    def batch(b, n):
        paths = generate_batch(params, schedule, grid, n, batch_rng(cfg.seed, b, stream=3), "P")
        diff = paths["v"][:, j_t] - paths["v_filtered"][:, j_t]
        iv = np.searchsorted(edges_v, paths["v"][:, j_k])
        iw = np.searchsorted(edges_w, paths["w_prime"][:, j_t] - paths["w_prime"][:, j_k])
        cell = iv * n_bins + iw
        onehot = cell[:, None] == np.arange(n_bins * n_bins)
        # per bin: indicator and indicator * diff, to form ratio estimates
        return np.hstack([onehot.astype(float), onehot * diff[:, None]])

    n, means, se = _run(cfg, batch)
    n_cells = n_bins * n_bins
    rows = []
    for c in range(n_cells):
        share = means[c]
        count = int(round(share * n))
        if count < min_per_bin:
            if t == t_k or params.rho == 1.0:
                continue
            raise ValidationError(f"bin {c} has {count} paths (< {min_per_bin}); use more paths")
        # the ratio estimator's SE is that of the bin-conditional mean
        est = means[n_cells + c] / share
        bin_se = se[n_cells + c] / share
        rows.append(CheckRow(f"bin(v={c // n_bins},w'={c % n_bins})", float(est), 0.0,
                             float(bin_se), _z(est, bin_se)))
    return CheckReport("filtering_identity", tuple(rows), n, cfg.seed)


def check_replication_cost(params: ModelParams, schedule: ReportSchedule, payoff: Callable,
                           cfg: McConfig, *, t_n: float | None = None,
                           state: MarketState | None = None, inner: int = 8) -> CheckReport:
    """Pricing ``X`` equals pricing its projection ``K* = E[X | G_{t_n -}]``.

    ``K*`` is estimated per path by resampling the ``W''`` increment of the
    last report period (the only ingredient of ``V_{t_n}`` outside
    ``G_{t_n -}``) ``inner`` times. Rows: the discounted Q-price of X, of
    K*, and their paired difference, which must be zero within 3 SE.
    """
    state = state or MarketState(0.0, params.v0)
    t_n = t_n if t_n is not None else next(d for d in schedule.dates if d > state.t)
    _check_state(schedule, state, t_n)
    theta, sigma, rho = params.theta, params.sigma, params.rho
    comp = math.sqrt(max(0.0, 1.0 - rho * rho))
    disc = math.exp(-params.r * (t_n - state.t))
    n_seg = sum(1 for d in schedule.dates if state.t < d <= t_n)

    def batch(b, n):
        rng = batch_rng(cfg.seed, b, stream=5)
        g1 = rng.standard_normal((n, n_seg))
        g2 = rng.standard_normal((n, n_seg))
        v, wp, segments = _forward(params, schedule, state, t_n, g1, g2, theta)
        x = np.broadcast_to(payoff(PathReports(v, wp, t_n, state)), (n,))
        start, end, v_start, wp_seg = segments[-1]
        fresh = rng.standard_normal((n, inner)) * math.sqrt(end - start)
        dw = rho * wp_seg[:, None] + comp * fresh
        v_inner = v_start[:, None] * firm_value(params, end - start, dw) / params.v0
        v_k = {d: a[:, None] for d, a in v.items()}
        v_k[t_n] = v_inner
        wp_k = {d: a[:, None] for d, a in wp.items()}
        k_star = np.broadcast_to(payoff(PathReports(v_k, wp_k, t_n, state)), (n, inner)).mean(axis=1)
        return np.column_stack([disc * x, disc * k_star, disc * (x - k_star)])

    stats = _run(cfg, batch)
    _, means, se = stats
    # the two price rows are informational; X and K* are compared through the paired difference
    rows = (
        CheckRow("price(X)", float(means[0]), float(means[0]), float(se[0]), 0.0),
        CheckRow("price(K*)", float(means[1]), float(means[1]), float(se[1]), 0.0),
        _row("price(X) - price(K*)", stats, 2),
    )
    return CheckReport("replication_cost", rows, stats[0], cfg.seed)
