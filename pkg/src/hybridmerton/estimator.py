"""scikit-learn estimator wrapper around :func:`hybridmerton.calibration.calibrate`.

Rows of ``X`` are debt observations with columns

    t, v_prime, at_report_date, face, maturity

and ``y`` holds the observed prices. ``fit`` estimates ``sigma_`` and
``rho_``; ``predict`` returns model prices; ``transform`` returns the spread
decomposition ``(total, default, transparency)`` per row.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .calibration import (
    MarketObservation,
    calibrate,
    decompose_spread,
    model_price,
)
from .exceptions import ValidationError
from .model import DebtClaim, ReportSchedule

COLUMNS = ("t", "v_prime", "at_report_date", "face", "maturity")


def observations_to_arrays(observations):
    X = np.array([[o.t, o.v_prime_observed, float(o.at_report_date), o.claim.face,
                   o.claim.maturity] for o in observations], dtype=float)
    y = np.array([o.price for o in observations], dtype=float)
    return X, y


def _rows_to_observations(X, y=None):
    prices = y if y is not None else np.ones(X.shape[0])
    return [
        MarketObservation(float(t), float(p), bool(flag), DebtClaim(float(face), float(mat)),
                          float(v))
        for (t, v, flag, face, mat), p in zip(X, prices)
    ]


class TransparencyCalibrator(RegressorMixin, TransformerMixin, BaseEstimator):
    """Calibrate (sigma, rho) to debt prices.

    Parameters
    ----------
    r : float
        Risk-free rate.
    report_dates : sequence of float
        Accounting report dates, starting at 0.
    """

    def __init__(self, r=0.0, report_dates=(0.0, 1.0)):
        self.r = r
        self.report_dates = report_dates

    def _validate(self, X, y=None):
        if y is None:
            X = check_array(X, dtype=float)
        else:
            X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if X.shape[1] != len(COLUMNS):
            raise ValidationError(f"X must have {len(COLUMNS)} columns {COLUMNS}, got {X.shape[1]}")
        return X, y

    def fit(self, X, y):
        X, y = self._validate(X, y)
        self.schedule_ = ReportSchedule(self.report_dates)
        result = calibrate(_rows_to_observations(X, y), self.r, self.schedule_)
        self.result_ = result
        self.sigma_ = result.sigma_hat
        self.rho_ = result.rho_hat
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "sigma_")
        X, _ = self._validate(X)
        return np.array([model_price(o, self.sigma_, self.rho_, self.r, self.schedule_)
                         for o in _rows_to_observations(X)])

    def transform(self, X):
        check_is_fitted(self, "sigma_")
        X, _ = self._validate(X)
        out = []
        for o in _rows_to_observations(X):
            d = decompose_spread(o, self.sigma_, self.rho_, self.r, self.schedule_)
            out.append((d.total, d.default_component, d.transparency_component))
        return np.array(out)
