import math

import numpy as np
import pytest

from app.models.lattice import EdgeField, TorusGrid
from app.models.law import ConductanceLaw
from app.services import oracles


def test_two_point_constants(law):
    assert oracles.expected_abar(law) == pytest.approx(2.0 / 3.0, rel=1e-15)
    assert oracles.expected_q(law) == pytest.approx(4.0 / 81.0, rel=1e-14)


def test_finite_side_mean_of_two_point_law(law):
    # L=1: ā = a, L=2: 낮은 변 수 k = 0, 1, 2
    assert oracles.expected_abar_finite(law, 1) == pytest.approx(0.75, rel=1e-15)
    assert oracles.expected_abar_finite(law, 2) == pytest.approx(0.25 + 0.5 * 2.0 / 3.0 + 0.25 * 0.5, rel=1e-15)
    # 조화평균 편향 Var(1/a) / (L E[1/a]³)
    L = 10 ** 4
    assert oracles.expected_abar_finite(law, L) == pytest.approx(2.0 / 3.0 + 0.25 / (3.375 * L), abs=1e-8)
    assert oracles.expected_abar_finite(law, 64) == pytest.approx(0.66783, abs=5e-6)


def test_finite_side_mean_needs_two_point_law(degenerate_law):
    assert oracles.expected_abar_finite(degenerate_law, 16) == pytest.approx(0.7, rel=1e-14)
    with pytest.raises(ValueError):
        oracles.expected_abar_finite(ConductanceLaw.uniform(0.5), 16)
    with pytest.raises(ValueError):
        oracles.expected_abar_finite(degenerate_law, 0)


def test_flat_beta_matches_uniform():
    uniform = ConductanceLaw.uniform(0.5)
    beta = ConductanceLaw.scaled_beta(1.0, 1.0, 0.5)
    assert oracles.expected_abar(uniform) == pytest.approx(0.5 / math.log(2.0), rel=1e-14)
    assert oracles.expected_abar(beta) == pytest.approx(oracles.expected_abar(uniform), rel=1e-8)
    assert oracles.expected_q(beta) == pytest.approx(oracles.expected_q(uniform), rel=1e-6)


def test_degenerate_law_has_no_fluctuations(degenerate_law):
    assert oracles.expected_abar(degenerate_law) == pytest.approx(0.7)
    assert oracles.expected_q(degenerate_law) == pytest.approx(0.0, abs=1e-15)


def test_harmonic_mean_and_corrector(field_1d):
    abar = oracles.harmonic_abar(field_1d)
    assert np.min(field_1d.values) <= abar <= np.mean(field_1d.values)
    grad = oracles.corrector_gradient(field_1d).values[:, 0]
    assert abs(grad.sum()) <= 1e-12


def test_solution_has_constant_flux(field_1d, rng):
    h = EdgeField(grid=field_1d.grid, values=rng.standard_normal((32, 1)))
    u, grad = oracles.divergence_form_solution(field_1d, h)
    flux = field_1d.values[:, 0] * grad.values[:, 0] + h.values[:, 0]
    assert np.ptp(flux) <= 1e-12
    assert abs(u.values.mean()) <= 1e-14
    assert np.allclose(np.roll(u.values, -1) - u.values, grad.values[:, 0], atol=1e-12)


def test_multidimensional_fields_rejected():
    with pytest.raises(ValueError):
        oracles.harmonic_abar(EdgeField.constant(TorusGrid(d=2, L=4), 0.5))
