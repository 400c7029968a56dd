import math

import numpy as np
import pytest
from scipy import stats

from app.models.lattice import TorusGrid
from app.models.law import ConductanceLaw, SeedSpec
from app.modules.random_fields import generator_for, perturbation_field, resample_edge, sample_field


def test_degenerate_law_gives_constant_field(degenerate_law, seed):
    a = sample_field(TorusGrid(d=2, L=6), degenerate_law, seed)
    assert np.all(a.values == 0.7)


def test_same_seed_gives_identical_fields(law, seed):
    grid = TorusGrid(d=3, L=5)
    first = sample_field(grid, law, seed.for_realization(4))
    second = sample_field(grid, law, seed.for_realization(4))
    assert np.array_equal(first.values, second.values)


def test_streams_depend_on_realization_and_purpose(law, seed):
    grid = TorusGrid(d=2, L=16)
    base = sample_field(grid, law, seed)
    assert not np.array_equal(base.values, sample_field(grid, law, seed.for_realization(1)).values)
    assert not np.array_equal(base.values, sample_field(grid, law, seed.with_purpose("pilot")).values)


def test_generator_is_a_pure_function_of_the_seed():
    spec = SeedSpec(master_seed=2 ** 64 - 1, realization_index=9, purpose="bootstrap")
    assert generator_for(spec).random() == generator_for(spec).random()


def test_two_point_mean_within_three_sigma(law, seed):
    grid = TorusGrid(d=2, L=224)
    a = sample_field(grid, law, seed)
    n = a.values.size
    assert n >= 10 ** 5
    assert abs(a.values.mean() - 0.75) <= 3.0 * math.sqrt(0.0625 / n)
    assert set(np.unique(a.values)) == {0.5, 1.0}


@pytest.mark.parametrize("law", [
    ConductanceLaw.uniform(0.25),
    ConductanceLaw.scaled_beta(2.0, 5.0, 0.4),
])
def test_continuous_laws_respect_ellipticity(law, seed):
    a = sample_field(TorusGrid(d=2, L=32), law, seed)
    assert a.values.min() >= law.lam
    assert a.values.max() <= 1.0
    assert abs(a.values.mean() - law.mean()) < 0.02


def test_realizations_are_uncorrelated(seed):
    law = ConductanceLaw.uniform(0.5)
    grid = TorusGrid(d=2, L=64)
    x = sample_field(grid, law, seed.for_realization(0)).values.ravel()
    y = sample_field(grid, law, seed.for_realization(1)).values.ravel()
    rho = np.corrcoef(x, y)[0, 1]
    assert abs(rho) < 4.0 / math.sqrt(x.size)


def test_resample_changes_only_the_chosen_edge(field_2d, law, seed):
    edge = (13, 1)
    perturbed, perturbation = resample_edge(field_2d, edge, seed, law)
    changed = np.argwhere(perturbed.values != field_2d.values)
    assert all(tuple(c) == edge for c in changed)
    assert perturbation.old_value == field_2d.values[edge]
    assert perturbation.new_value == perturbed.values[edge]

    delta = perturbation_field(field_2d.grid, perturbation).values
    assert np.array_equal(delta, field_2d.values - perturbed.values)
    assert np.count_nonzero(delta) <= 1


def test_resample_with_degenerate_law_is_identity(degenerate_law, seed):
    a = sample_field(TorusGrid(d=2, L=4), degenerate_law, seed)
    perturbed, perturbation = resample_edge(a, (5, 0), seed, degenerate_law)
    assert np.array_equal(perturbed.values, a.values)
    assert perturbation.delta == 0.0


def test_resample_rejects_edges_outside_the_grid(field_2d, law, seed):
    with pytest.raises(ValueError):
        resample_edge(field_2d, (field_2d.grid.node_count, 0), seed, law)
    with pytest.raises(ValueError):
        resample_edge(field_2d, (0, 2), seed, law)


def test_resample_needs_the_field_law(field_2d, seed):
    with pytest.raises(TypeError):
        resample_edge(field_2d, (0, 0), seed)


def test_resampled_values_follow_the_law(seed):
    """a^b(b) 의 경험 분포와 a 의 경험 분포가 같은지 (2 표본 KS, 1% 수준)"""
    law = ConductanceLaw.uniform(0.5)
    draws = 10 ** 4
    small = TorusGrid(d=1, L=4)
    resampled = np.empty(draws)
    for n in range(draws):
        spec = seed.for_realization(n)
        a = sample_field(small, law, spec)
        resampled[n] = resample_edge(a, (0, 0), spec, law)[1].new_value
    original = sample_field(TorusGrid(d=1, L=draws), law, seed.with_purpose("reference")).values.ravel()
    assert stats.ks_2samp(resampled, original).pvalue > 0.01
