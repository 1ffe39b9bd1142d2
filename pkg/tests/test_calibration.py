import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from hybridmerton import (
    DebtClaim,
    MarketObservation,
    ModelParams,
    PricingContext,
    ReportSchedule,
    calibrate,
    credit_spread,
    debt_price_closed_form,
    decompose_spread,
    generate_synthetic_market,
    implied_rho,
    implied_sigma,
)
from hybridmerton.calibration import model_price
from hybridmerton.exceptions import (
    IllConditionedError,
    IllConditionedWarning,
    OutOfBoundsError,
    ValidationError,
)

SCHED = ReportSchedule([0.0, 1.0, 2.0])
CLAIM = DebtClaim(90.0, 2.0)
R = 0.03


def observe(t, v_prime, sigma=0.25, rho=0.6, claim=CLAIM):
    params = ModelParams(100.0, 0.08, sigma, R, rho)
    ctx = PricingContext.from_market_value(params, SCHED, t, v_prime)
    return MarketObservation(t, debt_price_closed_form(ctx, claim), t in SCHED, claim, v_prime)


class TestImpliedSigma:
    @pytest.mark.parametrize("sigma", [0.05, 0.25, 0.6, 1.5])
    def test_round_trip(self, sigma):
        assert implied_sigma(observe(1.0, 104.0, sigma=sigma), R) == pytest.approx(sigma, abs=1e-8)

    def test_riskless_limit(self):
        face = 90.0
        v = face * math.exp(-R * 1.0)  # at-the-money forward: price = riskless minus O(sigma)
        obs = MarketObservation(1.0, face * math.exp(-R) * (1 - 1e-6), True, CLAIM, v)
        assert 0 < implied_sigma(obs, R) < 1e-5

    def test_above_riskless_bound(self):
        obs = MarketObservation(1.0, 90.0 * math.exp(-R) * 1.001, True, CLAIM, 150.0)
        with pytest.raises(OutOfBoundsError) as exc:
            implied_sigma(obs, R)
        assert exc.value.bound == "upper"

    def test_tiny_price_needs_huge_sigma(self):
        # debt value tends to 0 as sigma grows, so any positive price is attainable
        obs = MarketObservation(1.0, 1e-9, True, CLAIM, 150.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedWarning)
            assert implied_sigma(obs, R) > 5

    def test_non_positive_price_rejected(self):
        with pytest.raises(ValidationError):
            MarketObservation(1.0, 0.0, True, CLAIM, 150.0)

    def test_flat_price_warns(self):
        with pytest.warns(IllConditionedWarning):
            # far from default: the put component is ~1e-10 and nearly flat in sigma
            implied_sigma(observe(1.0, 165.0, sigma=0.1), R)

    def test_needs_report_date(self):
        with pytest.raises(ValidationError):
            implied_sigma(observe(1.5, 104.0), R)


class TestImpliedRho:
    @pytest.mark.parametrize("rho", [0.1, 0.6, 0.95])
    def test_round_trip(self, rho):
        obs = observe(1.5, 98.0, rho=rho)
        assert implied_rho(obs, 0.25, R, SCHED) == pytest.approx(rho, abs=1e-6)

    def test_full_observation_boundary(self):
        assert implied_rho(observe(1.5, 98.0, rho=1.0), 0.25, R, SCHED) == 1.0

    def test_report_date_has_no_information(self):
        with pytest.raises(IllConditionedError):
            implied_rho(observe(1.0, 98.0), 0.25, R, SCHED)

    def test_above_full_transparency(self):
        obs = observe(1.5, 98.0, rho=1.0)
        with pytest.raises(OutOfBoundsError) as exc:
            implied_rho(replace(obs, price=obs.price * 1.001), 0.25, R, SCHED)
        assert exc.value.bound == "upper"

    def test_below_opaque_limit(self):
        obs = observe(1.5, 98.0, rho=0.01)
        with pytest.raises(OutOfBoundsError):
            implied_rho(replace(obs, price=obs.price * 0.99), 0.25, R, SCHED)

    def test_sensitivity_vanishes_near_period_start(self):
        slopes = []
        for dt in (0.3, 0.1, 0.01, 0.001):
            hi = observe(1.0 + dt, 98.0, rho=0.61).price
            lo = observe(1.0 + dt, 98.0, rho=0.59).price
            slopes.append((hi - lo) / 0.02)
        assert all(a > b > 0 for a, b in zip(slopes, slopes[1:]))
        with pytest.warns(IllConditionedWarning):
            implied_rho(observe(1.0 + 1e-7, 98.0, rho=0.6), 0.25, R, SCHED)


class TestCalibrate:
    times = [i / 4 for i in range(8)]

    @pytest.mark.parametrize("rho", [0.3, 0.6, 0.9])
    def test_noiseless_round_trip(self, rho):
        p = ModelParams(100, 0.08, 0.25, R, rho)
        market = generate_synthetic_market(p, SCHED, CLAIM, self.times, seed=3)
        res = calibrate(market.observations, R, SCHED)
        assert res.sigma_hat == pytest.approx(0.25, abs=1e-8)
        assert res.rho_hat == pytest.approx(rho, abs=1e-6)
        assert max(abs(x) for x in res.residuals) <= 1e-10 * CLAIM.face

    def test_single_observation_per_stage(self):
        obs = [observe(0.0, 100.0), observe(0.5, 101.0)]
        res = calibrate(obs, R, SCHED)
        assert (res.bracket_diagnostics["sigma_method"], res.bracket_diagnostics["rho_method"]) == (
            "brentq", "brentq")
        assert res.sigma_hat == pytest.approx(0.25, abs=1e-8)
        assert res.rho_hat == pytest.approx(0.6, abs=1e-6)

    def test_report_dates_only(self):
        res = calibrate([observe(0.0, 100.0), observe(1.0, 95.0)], R, SCHED)
        assert res.rho_hat is None and not res.rho_identified
        assert res.sigma_hat == pytest.approx(0.25, abs=1e-8)

    def test_needs_report_date(self):
        with pytest.raises(ValidationError):
            calibrate([observe(0.5, 100.0)], R, SCHED)

    def test_flag_must_match_schedule(self):
        bad = replace(observe(0.5, 100.0), at_report_date=True)
        with pytest.raises(ValidationError):
            calibrate([observe(0.0, 100.0), bad], R, SCHED)

    def test_no_arbitrage_bound(self):
        bad = replace(observe(0.5, 100.0), price=500.0)
        with pytest.raises(ValidationError):
            calibrate([observe(0.0, 100.0), bad], R, SCHED)


class TestDecompose:
    def test_additive_and_matches_spreads(self):
        obs = observe(1.5, 97.0, rho=0.5)
        d = decompose_spread(obs, 0.25, 0.5, R, SCHED)
        ctx = lambda rho: PricingContext.from_market_value(ModelParams(100, 0.08, 0.25, R, rho), SCHED, 1.5, 97.0)
        total = credit_spread(ctx(0.5), CLAIM)
        full = credit_spread(ctx(1.0), CLAIM)
        assert d.default_component == pytest.approx(full, abs=1e-14)
        assert d.transparency_component == pytest.approx(total - full, abs=1e-14)
        assert d.transparency_component > 0
        assert d.default_component + d.transparency_component == d.total

    def test_full_transparency(self):
        d = decompose_spread(observe(1.5, 97.0), 0.25, 1.0, R, SCHED)
        assert d.transparency_component == 0.0

    def test_report_date(self):
        d = decompose_spread(observe(1.0, 97.0), 0.25, 0.3, R, SCHED)
        assert d.transparency_component == 0.0

    def test_unidentified_rho_mid_period(self):
        with pytest.raises(ValidationError):
            decompose_spread(observe(1.5, 97.0), 0.25, None, R, SCHED)


class TestSyntheticMarket:
    def test_deterministic_and_flags(self):
        p = ModelParams(100, 0.08, 0.25, R, 0.6)
        a = generate_synthetic_market(p, SCHED, CLAIM, [0, 0.5, 1.0, 1.5], noise=0.01, seed=4)
        b = generate_synthetic_market(p, SCHED, CLAIM, [0, 0.5, 1.0, 1.5], noise=0.01, seed=4)
        assert a == b
        assert [o.at_report_date for o in a.observations] == [True, False, True, False]
        assert a.params_true == p

    def test_noise_is_multiplicative(self):
        p = ModelParams(100, 0.08, 0.25, R, 0.6)
        clean = generate_synthetic_market(p, SCHED, CLAIM, [0, 0.5], seed=4)
        noisy = generate_synthetic_market(p, SCHED, CLAIM, [0, 0.5], noise=0.005, seed=4)
        for c, n in zip(clean.observations, noisy.observations):
            assert c.v_prime_observed == n.v_prime_observed
            assert 0 < abs(math.log(n.price / c.price)) < 0.005 * 5

    def test_report_only_leaves_rho_unidentified(self):
        p = ModelParams(100, 0.08, 0.25, R, 0.6)
        market = generate_synthetic_market(p, SCHED, CLAIM, [1.0], seed=1)
        assert calibrate(market.observations, R, SCHED).sigma_hat == pytest.approx(0.25, abs=1e-8)
        with pytest.raises(IllConditionedError):
            implied_rho(market.observations[0], 0.25, R, SCHED)

    def test_observation_range(self):
        p = ModelParams(100, 0.08, 0.25, R, 0.6)
        with pytest.raises(ValidationError):
            generate_synthetic_market(p, SCHED, CLAIM, [0.5, 2.0])
