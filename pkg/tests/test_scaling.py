import math

import pytest

from app.models.stats import RateCorrection, StudyPoint
from app.services.scaling import scaling_fit
from app.utils.exceptions import InsufficientPoints

SIDES = [8, 16, 32, 64]


def test_pure_power_law():
    fit = scaling_fit([(x, x ** -2.0) for x in SIDES])
    assert fit.slope == pytest.approx(-2.0, abs=1e-10)
    assert fit.intercept == pytest.approx(0.0, abs=1e-9)
    assert fit.points == 4
    # 잔차가 없으면 기울기 오차도 0 (NaN 이 아님)
    assert math.isfinite(fit.slope_se) and fit.slope_se <= 1e-8
    assert fit.confidence[0] <= fit.slope <= fit.confidence[1]
    assert fit.confidence[1] - fit.confidence[0] <= 1e-7


def test_log_correction_is_divided_out():
    points = [(x, math.log(2 + x) / x) for x in SIDES]
    uncorrected = scaling_fit(points)
    corrected = scaling_fit(points, RateCorrection(kind="log_power", power=1.0))
    assert corrected.slope == pytest.approx(-1.0, abs=1e-10)
    assert uncorrected.slope > -1.0


def test_inverse_mu_d_correction_for_epsilon():
    eps = [1.0 / x for x in SIDES]
    points = [StudyPoint(parameter=e, statistic=e * math.log(2 + 1.0 / e)) for e in eps]
    fit = scaling_fit(points, RateCorrection(kind="mu_d", d=2, inverse=True))
    assert fit.slope == pytest.approx(1.0, abs=1e-10)


def test_weighted_fit_reports_confidence():
    noise = [1.004, 0.997, 1.002, 0.999, 1.001]
    xs = [8, 16, 32, 64, 128]
    points = [(x, 3.0 * x ** -0.5 * n, 0.01 * 3.0 * x ** -0.5) for x, n in zip(xs, noise)]
    fit = scaling_fit(points, confidence=0.95)
    assert fit.slope_se > 0.0
    low, high = fit.confidence
    assert low < -0.5 < high
    assert fit.slope == pytest.approx(-0.5, abs=0.005)


def test_too_few_points():
    with pytest.raises(InsufficientPoints):
        scaling_fit([(8, 1.0)])
    with pytest.raises(InsufficientPoints):
        scaling_fit([(8, 1.0), (16, 0.5)])


def test_non_positive_values_rejected():
    with pytest.raises(ValueError):
        scaling_fit([(8, 1.0), (16, 0.0), (32, 0.25)])
    with pytest.raises(ValueError):
        scaling_fit([(0, 1.0), (16, 0.5), (32, 0.25)])
