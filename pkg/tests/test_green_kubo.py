import numpy as np
import pytest

from app.models.corrector import CommutatorField
from app.models.lattice import MatrixField, TorusGrid
from app.services.green_kubo import (
    estimate_from_moments,
    green_kubo_window,
    realization_moments,
    window_weights,
)
from app.utils.exceptions import InsufficientSamples


def _xi(grid, values):
    return CommutatorField(xi=MatrixField(grid=grid, values=values), abar_ref=np.identity(grid.d))


def test_window_weights():
    grid = TorusGrid(d=2, L=8)
    w = window_weights(grid, 4)
    assert w.shape == (8, 8)
    assert w[0, 0] == 1.0
    assert w[4, 0] == 0.0
    assert w[2, 6] == pytest.approx(0.25)
    assert np.sum(w) == pytest.approx(16.0)
    with pytest.raises(ValueError):
        window_weights(grid, 3)


def test_zero_commutator_gives_zero_estimate():
    grid = TorusGrid(d=2, L=8)
    zeros = [_xi(grid, np.zeros((grid.node_count, 2, 2))) for _ in range(3)]
    estimate = green_kubo_window(zeros, 4)
    assert np.all(estimate.Q == 0.0)
    assert estimate.realizations == 3


def test_constant_commutator_moments():
    grid = TorusGrid(d=2, L=8)
    c = 0.3
    W, mu = realization_moments(_xi(grid, np.full((grid.node_count, 2, 2), c)), 4)
    assert W.shape == (4, 4)
    assert np.allclose(W, c * c * 16.0, rtol=1e-12)
    assert np.allclose(mu, c, rtol=1e-12)


def test_white_noise_recovers_pointwise_variance():
    """상관 없는 Ξ 면 창 합은 x = 0 항 (= 분산) 만 남음"""
    rng = np.random.default_rng(7)
    grid = TorusGrid(d=1, L=64)
    s = 0.3
    fields = [_xi(grid, s * rng.standard_normal((grid.node_count, 1, 1))) for _ in range(400)]
    estimate = green_kubo_window(fields, 32)
    q, se = estimate.Q[0, 0, 0, 0], estimate.Q_se[0, 0, 0, 0]
    assert se > 0.0
    assert abs(q - s * s) <= 4.0 * se


def test_moments_combine_like_fields():
    rng = np.random.default_rng(8)
    grid = TorusGrid(d=2, L=8)
    fields = [_xi(grid, rng.standard_normal((grid.node_count, 2, 2))) for _ in range(5)]
    direct = green_kubo_window(fields, 4)
    combined = estimate_from_moments([realization_moments(x, 4) for x in fields], grid, 4)
    assert np.array_equal(direct.Q, combined.Q)
    assert np.array_equal(direct.Q, direct.Q.transpose(2, 3, 0, 1))


def test_single_realization_rejected():
    grid = TorusGrid(d=1, L=8)
    with pytest.raises(InsufficientSamples):
        green_kubo_window([_xi(grid, np.ones((8, 1, 1)))], 4)
