import numpy as np
import pytest

from app.models.law import SeedSpec
from app.services.normality import normality_metrics, normality_report, standardize
from app.utils.exceptions import DegenerateSample, InsufficientSamples


def test_gaussian_samples_are_close_to_normal(rng):
    kolmogorov, wasserstein = normality_metrics(rng.normal(3.0, 2.0, size=10 ** 4))
    assert kolmogorov <= 0.03
    assert wasserstein <= 0.03


def test_two_point_samples_are_far_from_normal():
    samples = np.tile([-1.0, 1.0], 100)
    kolmogorov, wasserstein = normality_metrics(samples)
    # 경험 CDF 가 -1 에서 0.5 로 뛰는데 Φ(-1) ≈ 0.159
    assert kolmogorov >= 0.3
    assert wasserstein > 0.1


def test_standardize():
    z = standardize([1.0, 2.0, 3.0, 4.0])
    assert z.mean() == pytest.approx(0.0, abs=1e-15)
    assert z.std(ddof=1) == pytest.approx(1.0)


def test_degenerate_and_small_samples():
    with pytest.raises(DegenerateSample):
        normality_metrics(np.full(200, 0.25))
    with pytest.raises(InsufficientSamples):
        normality_metrics(np.arange(50.0))


def test_report_without_bootstrap(rng):
    report = normality_report(rng.standard_normal(500))
    assert report.n == 500
    assert report.kolmogorov_ci is None
    assert report.delta == pytest.approx(report.kolmogorov + report.wasserstein)


def test_bootstrap_intervals_are_reproducible(rng):
    samples = rng.standard_normal(200)
    seed = SeedSpec(master_seed=5)
    first = normality_report(samples, bootstrap_resamples=200, seed=seed)
    second = normality_report(samples, bootstrap_resamples=200, seed=seed)
    for name in ("kolmogorov_ci", "wasserstein_ci", "delta_ci"):
        low, high = getattr(first, name)
        assert low <= high
        assert getattr(second, name) == (low, high)
