import numpy as np
import pytest

from hybridmerton import DebtClaim, ModelParams, ReportSchedule


@pytest.fixture
def params():
    return ModelParams(v0=100.0, mu=0.07, sigma=0.25, r=0.03, rho=0.6)


@pytest.fixture
def schedule():
    return ReportSchedule([0.0, 1.0, 2.0])


@pytest.fixture
def claim():
    return DebtClaim(face=70.0, maturity=2.0)


def debt_payoff(face):
    return lambda v: np.minimum(face, v)
