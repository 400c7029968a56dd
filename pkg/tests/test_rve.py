import math

import numpy as np
import pytest

from app.models.law import ConductanceLaw
from app.services import oracles
from app.services.rve import (
    abar_task,
    commutator_means,
    estimate_from_abars,
    fluctuation_tensor,
    nested_prefix_estimates,
    rve_estimate,
    rve_q_from_commutators,
    rve_statistics,
    systematic_error_report,
)
from app.utils.exceptions import InsufficientSamples


def _synthetic_abars(rng, N, d=2):
    base = np.array([[0.7, 0.01], [0.01, 0.68]])[:d, :d]
    noise = 0.02 * rng.standard_normal((N, d, d))
    return base + 0.5 * (noise + np.transpose(noise, (0, 2, 1)))


def test_degenerate_law_gives_zero_fluctuations(degenerate_law):
    estimate = rve_estimate(L=4, N=3, law=degenerate_law, master_seed=1, d=2)
    assert np.all(estimate.Q == 0.0)
    assert np.allclose(estimate.abar, 0.7 * np.identity(2), atol=1e-15)
    assert estimate.N == 3
    assert estimate.failed == []


def test_pair_exchange_symmetry(rng):
    Q = fluctuation_tensor(_synthetic_abars(rng, 50), L=8)
    assert np.array_equal(Q, Q.transpose(2, 3, 0, 1))


def test_direct_and_commutator_forms_agree(rng):
    abars = _synthetic_abars(rng, 40)
    mean_gradients = np.broadcast_to(np.identity(2), abars.shape)
    mean = estimate_from_abars(abars, 8, master_seed=0).abar
    xi_means = commutator_means(abars, mean_gradients, mean)
    direct = fluctuation_tensor(abars, 8)
    assert np.max(np.abs(rve_q_from_commutators(xi_means, 8) - direct)) <= 1e-14 * np.max(np.abs(direct))


def test_commutator_means_from_realizations(law, tight):
    outcome = abar_task(8, 2, law, 5, tight, 0)
    abar, M = outcome.payload["abar"], outcome.payload["mean_gradient"]
    assert np.allclose(M, np.identity(2), atol=1e-14)
    ref = np.array([[0.66, 0.0], [0.0, 0.69]])
    xi_mean = commutator_means(abar[None], M[None], ref)[0]
    assert np.allclose(xi_mean, (abar - ref).T, atol=1e-14)
    assert [r.purpose for r in outcome.records] == ["corrector_0", "corrector_1"]


def test_too_few_realizations():
    with pytest.raises(InsufficientSamples):
        fluctuation_tensor(np.ones((1, 2, 2)), L=4)
    with pytest.raises(InsufficientSamples):
        rve_estimate(L=4, N=1, law=ConductanceLaw(), master_seed=0)


def test_standard_errors(rng):
    abars = _synthetic_abars(rng, 200)
    mean, abar_se, Q, Q_se = rve_statistics(abars, L=8)
    assert np.allclose(abar_se, abars.std(axis=0, ddof=1) / math.sqrt(200))
    assert np.all(Q_se >= 0.0)
    _, _, _, nan_se = rve_statistics(abars[:2], L=8)
    assert np.all(np.isnan(nan_se))


def test_standard_error_halves_with_fourfold_samples(rng):
    abars = _synthetic_abars(rng, 8000)
    small = rve_statistics(abars[:2000], L=8)[1][0, 0]
    large = rve_statistics(abars[:4000], L=8)[1][0, 0]
    assert small / large == pytest.approx(math.sqrt(2.0), rel=0.15)


def test_nested_prefixes(rng):
    abars = _synthetic_abars(rng, 100)
    nested = nested_prefix_estimates(abars, L=8, sizes=[25, 50, 100, 400])
    assert sorted(nested) == [25, 50, 100]
    assert nested[100][0] == pytest.approx(fluctuation_tensor(abars, 8)[0, 0, 0, 0])


def test_one_dimensional_mean_matches_finite_side_oracle(law):
    estimate = rve_estimate(L=64, N=400, law=law, master_seed=11, d=1)
    exact = oracles.expected_abar_finite(law, 64)
    assert abs(estimate.abar[0, 0] - exact) <= 3 * estimate.abar_se[0, 0]


def test_systematic_error_report_pairs_doubled_sides(rng):
    estimates = [estimate_from_abars(_synthetic_abars(rng, 30) + 0.01 / L, L, 0) for L in (4, 8, 16)]
    rows = systematic_error_report(estimates)
    assert [r["L"] for r in rows] == [4, 8]
    assert "ratio" in rows[1]
    assert all(isinstance(r["swamped"], bool) for r in rows)


@pytest.mark.slow
def test_one_dimensional_q_oracle(law):
    """d=1, L=64, N=10^4: Q = ā⁴Var(1/a) = 4/81"""
    estimate = rve_estimate(L=64, N=10 ** 4, law=law, master_seed=2024, d=1, workers=4)
    q, se = estimate.q_component(0, 0, 0, 0)
    assert abs(q - 4.0 / 81.0) <= 3.0 * se
    assert abs(estimate.abar[0, 0] - oracles.expected_abar_finite(law, 64)) <= 3.0 * estimate.abar_se[0, 0]
