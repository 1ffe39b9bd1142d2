import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridmerton import (
    DebtClaim,
    ModelParams,
    ReportSchedule,
    filtered_value,
    firm_value,
    sample_paths,
    state_price_density,
)
from hybridmerton.exceptions import DegenerateParameterError, ScheduleLookupError, ValidationError


class TestParams:
    def test_theta(self):
        p = ModelParams(100, 0.08, 0.2, 0.03, 0.5)
        assert p.theta == pytest.approx(-0.5, abs=1e-15)

    @pytest.mark.parametrize("kwargs", [
        dict(v0=0.0), dict(v0=-1.0), dict(sigma=-0.1), dict(rho=0.0), dict(rho=1.2),
        dict(mu=math.nan),
    ])
    def test_rejects_invalid(self, kwargs):
        base = dict(v0=100.0, mu=0.05, sigma=0.2, r=0.03, rho=0.5)
        base.update(kwargs)
        with pytest.raises(ValidationError):
            ModelParams(**base)

    def test_rho_one_is_valid(self):
        assert ModelParams(100, 0.05, 0.2, 0.03, 1.0).rho == 1.0

    def test_theta_degenerate(self):
        with pytest.raises(DegenerateParameterError):
            ModelParams(100, 0.05, 0.0, 0.03, 0.5).theta


class TestSchedule:
    def test_lookup(self, schedule):
        assert schedule.lookup(0.0) == (0.0, 1.0)
        assert schedule.lookup(1.5) == (1.0, 2.0)
        assert schedule.lookup(1.0) == (1.0, 2.0)
        assert schedule.lookup(3.0) == (2.0, math.inf)

    def test_lookup_negative(self, schedule):
        with pytest.raises(ScheduleLookupError):
            schedule.lookup(-0.1)

    @pytest.mark.parametrize("dates", [[], [0.5, 1.0], [0, 1, 1], [0, 2, 1]])
    def test_invalid(self, dates):
        with pytest.raises(ValidationError):
            ReportSchedule(dates)

    def test_claim_maturity_must_be_report_date(self, schedule):
        with pytest.raises(ValidationError):
            DebtClaim(50, 1.5).check(schedule)
        with pytest.raises(ValidationError):
            DebtClaim(-1, 1.0)


class TestFirmValue:
    def test_initial(self):
        assert firm_value(ModelParams(100, 0.3, 0.4, 0.0, 1.0), 0.0, 0.0) == 100.0

    def test_deterministic(self):
        p = ModelParams(100, 0.05, 0.0, 0.0, 1.0)
        assert firm_value(p, 2.0, 12.3) == pytest.approx(110.51709180756476, rel=1e-15)

    def test_arithmetic_oracle(self):
        # 100 exp((0.05 - 0.02) + 0.1), evaluated in 40-digit arithmetic
        p = ModelParams(100, 0.05, 0.2, 0.0, 1.0)
        assert firm_value(p, 1.0, 0.5) == pytest.approx(113.88283833246218306, rel=1e-15)

    @given(t=st.floats(0, 10), w=st.floats(-5, 5), sigma=st.floats(0, 1))
    def test_positive(self, t, w, sigma):
        assert firm_value(ModelParams(50, 0.1, sigma, 0.0, 1.0), t, w) > 0


class TestFilteredValue:
    def test_coincides_at_report_date(self, params, schedule):
        assert filtered_value(params, schedule, 1.0, 87.5, 0.0) == 87.5

    def test_full_observation_matches_firm_value(self, schedule):
        p = ModelParams(100, 0.06, 0.3, 0.02, 1.0)
        w_k, w_t = 0.4, -0.1
        v_k = firm_value(p, 1.0, w_k)
        got = filtered_value(p, schedule, 1.6, v_k, w_t - w_k)
        assert got == pytest.approx(firm_value(p, 1.6, w_t), rel=1e-14)

    def test_deterministic_growth(self, schedule):
        p = ModelParams(100, 0.06, 0.0, 0.02, 0.4)
        assert filtered_value(p, schedule, 1.5, 80.0, 3.0) == pytest.approx(80 * math.exp(0.03), rel=1e-15)

    def test_negative_time(self, params, schedule):
        with pytest.raises(ScheduleLookupError):
            filtered_value(params, schedule, -1.0, 100.0, 0.0)

    @given(t=st.floats(0, 3), w=st.floats(-5, 5), rho=st.floats(0.01, 1))
    def test_positive(self, t, w, rho):
        p = ModelParams(100, 0.05, 0.3, 0.02, rho)
        assert filtered_value(p, ReportSchedule([0, 1, 2]), t, 90.0, w) > 0


class TestStatePriceDensity:
    def test_initial(self, params):
        assert state_price_density(params, 0.0, 0.0) == 1.0

    def test_risk_neutral_drift(self):
        p = ModelParams(100, 0.03, 0.2, 0.03, 0.5)
        assert state_price_density(p, 2.0, 0.7) == pytest.approx(math.exp(-0.06), rel=1e-15)

    def test_arithmetic_oracle(self):
        # theta = -0.5; exp(-0.5 * 0.3 - 0.125 - 0.03) in 40-digit arithmetic
        p = ModelParams(100, 0.08, 0.2, 0.03, 0.5)
        assert state_price_density(p, 1.0, 0.3) == pytest.approx(0.73712337439162773243, rel=1e-15)

    def test_degenerate(self):
        with pytest.raises(DegenerateParameterError):
            state_price_density(ModelParams(100, 0.08, 0.0, 0.03, 0.5), 1.0, 0.0)


class TestSamplePaths:
    grid = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0]

    def test_shapes_and_initial_values(self, params, schedule):
        b = sample_paths(params, schedule, self.grid, 100, "P", seed=1)
        for arr in (b.w, b.w_prime, b.v, b.v_filtered, b.z):
            assert arr.shape == (100, len(self.grid))
        assert np.all(b.w[:, 0] == 0) and np.all(b.w_prime[:, 0] == 0)
        assert np.all(b.v[:, 0] == params.v0) and np.all(b.z[:, 0] == 1.0)

    def test_deterministic(self, params, schedule):
        a = sample_paths(params, schedule, self.grid, 70_000, "Q", seed=5)
        b = sample_paths(params, schedule, self.grid, 70_000, "Q", seed=5)
        for name in ("w", "w_prime", "v", "v_filtered", "z"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_seed_changes_paths(self, params, schedule):
        a = sample_paths(params, schedule, self.grid, 10, seed=1)
        b = sample_paths(params, schedule, self.grid, 10, seed=2)
        assert not np.array_equal(a.w, b.w)

    def test_report_dates_coincide(self, params, schedule):
        b = sample_paths(params, schedule, self.grid, 500, seed=3)
        for t in (0.0, 1.0, 2.0):
            j = self.grid.index(t)
            np.testing.assert_array_equal(b.v_filtered[:, j], b.v[:, j])

    def test_report_dates_inserted_when_off_grid(self, params, schedule):
        # grid without t=1: the filtered value must still anchor at the report
        b = sample_paths(params, schedule, [0.0, 0.5, 1.5], 20_000, seed=3)
        c = sample_paths(params, schedule, [0.0, 0.5, 1.0, 1.5], 20_000, seed=3)
        np.testing.assert_allclose(b.v_filtered[:, 2], c.v_filtered[:, 3], rtol=1e-14)

    def test_full_observation(self, schedule):
        p = ModelParams(100, 0.06, 0.3, 0.02, 1.0)
        b = sample_paths(p, schedule, self.grid, 1000, seed=9)
        np.testing.assert_allclose(b.v_filtered, b.v, rtol=1e-13)

    def test_coupling(self, params, schedule):
        b = sample_paths(params, schedule, np.linspace(0, 2, 11), 20_000, seed=4)
        dw = np.diff(b.w, axis=1).ravel()
        dwp = np.diff(b.w_prime, axis=1).ravel()
        assert dw.size >= 100_000
        assert abs(np.corrcoef(dw, dwp)[0, 1] - params.rho) < 0.01

    def test_discounted_density_is_p_martingale(self, params, schedule):
        b = sample_paths(params, schedule, self.grid, 200_000, "P", seed=11)
        x = b.z * np.exp(params.r * np.asarray(self.grid))
        se = x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])
        z = (x.mean(axis=0)[1:] - 1) / se[1:]
        assert np.all(np.abs(z) < 3), z

    def test_q_drift(self, params, schedule):
        # under Q, W' carries drift theta
        b = sample_paths(params, schedule, self.grid, 200_000, "Q", seed=12)
        mean, se = b.w_prime[:, -1].mean(), b.w_prime[:, -1].std() / math.sqrt(200_000)
        assert abs(mean - params.theta * 2.0) < 3 * se

    @pytest.mark.parametrize("grid", [[0.5, 1.0], [0.0, 1.0, 1.0], [0.0, 2.0, 1.0]])
    def test_invalid_grid(self, params, schedule, grid):
        with pytest.raises(ValidationError):
            sample_paths(params, schedule, grid, 10)

    def test_zero_paths(self, params, schedule):
        with pytest.raises(ValidationError):
            sample_paths(params, schedule, self.grid, 0)

    def test_bad_measure(self, params, schedule):
        with pytest.raises(ValidationError):
            sample_paths(params, schedule, self.grid, 10, measure="R")
