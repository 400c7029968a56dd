import numpy as np
import pytest

from app.models.lattice import EdgeField, MatrixField, TorusGrid
from app.models.solver import SolveConfig
from app.models.stats import SolutionFunctionals, TestFunction
from app.modules.elliptic_solver import solve_variable
from app.modules.random_fields import sample_field
from app.services import oracles
from app.services.correctors import build_pack, pack_commutator
from app.services.functionals import (
    check_epsilon,
    corrector_functionals,
    j0_functional,
    solution_functionals,
)
from app.utils.exceptions import SupportOverflow


@pytest.fixture
def field_16(law, seed):
    return sample_field(TorusGrid(d=2, L=16), law, seed)


@pytest.fixture
def pack_16(field_16, tight, seed):
    return build_pack(field_16, tight, with_flux_corrector=False, seed=seed)


def _random_tensor(grid, rng):
    return MatrixField(grid=grid, values=rng.standard_normal((grid.node_count, grid.d, grid.d)))


def test_j0_vanishes_for_zero_commutator():
    grid = TorusGrid(d=2, L=16)
    pack = build_pack(EdgeField.constant(grid, 0.8), with_flux_corrector=False)
    xi = pack_commutator(pack, 0.8 * np.identity(2))
    assert j0_functional(xi, TestFunction(), 1.0 / 16) == 0.0


def test_j0_is_linear(pack_16, rng):
    xi = pack_commutator(pack_16)
    F, G = _random_tensor(pack_16.grid, rng), _random_tensor(pack_16.grid, rng)
    combined = MatrixField(grid=pack_16.grid, values=2.5 * F.values + G.values)
    eps = 1.0 / 16
    expected = 2.5 * j0_functional(xi, F, eps) + j0_functional(xi, G, eps)
    assert j0_functional(xi, combined, eps) == pytest.approx(expected, rel=1e-12, abs=1e-14)


def test_j0_of_constant_tensor_with_own_abar(pack_16):
    A = np.array([[1.0, 0.3], [-0.2, 0.5]])
    F = MatrixField(grid=pack_16.grid, values=np.broadcast_to(A, (pack_16.grid.node_count, 2, 2)))
    assert abs(j0_functional(pack_commutator(pack_16), F, 1.0 / 16)) <= 1e-10


def test_j0_with_test_function_matches_riemann_sum(pack_16):
    xi = pack_commutator(pack_16)
    F = TestFunction(kind="tensor_bump", amplitude=((0.0, 1.0), (1.0, 0.0)))
    Fv = F.tensor_field(pack_16.grid).values
    expected = (1.0 / 16) * np.sum(Fv * xi.xi.values)
    assert j0_functional(xi, F, 1.0 / 16) == pytest.approx(expected, rel=1e-12)


def test_constant_medium_corrector_functionals():
    grid = TorusGrid(d=2, L=16)
    pack = build_pack(EdgeField.constant(grid, 0.8), with_flux_corrector=False)
    j1, j2 = corrector_functionals(pack, TestFunction(), 1.0 / 16, 0.8 * np.identity(2))
    assert j1 == 0.0
    assert j2 == 0.0


def test_corrector_functionals_are_linear(pack_16, rng):
    F, G = _random_tensor(pack_16.grid, rng), _random_tensor(pack_16.grid, rng)
    combined = MatrixField(grid=pack_16.grid, values=F.values - 3.0 * G.values)
    eps = 1.0 / 16
    lhs = corrector_functionals(pack_16, combined, eps)
    f, g = corrector_functionals(pack_16, F, eps), corrector_functionals(pack_16, G, eps)
    for k in range(2):
        assert lhs[k] == pytest.approx(f[k] - 3.0 * g[k], rel=1e-10, abs=1e-12)


def test_epsilon_must_match_torus(pack_16):
    with pytest.raises(ValueError):
        check_epsilon(pack_16.grid, 1.0 / 8)
    with pytest.raises(ValueError):
        j0_functional(pack_commutator(pack_16), TestFunction(), 0.1)


def test_support_overflow_is_reported(pack_16):
    with pytest.raises(SupportOverflow):
        j0_functional(pack_commutator(pack_16), TestFunction(width=0.2), 1.0 / 16)
    with pytest.raises(SupportOverflow):
        TestFunction(center=(0.2, 0.5)).check_support(2)


def test_constant_medium_solution_functionals(tight):
    grid = TorusGrid(d=2, L=16)
    a = EdgeField.constant(grid, 0.8)
    f = TestFunction()
    values = solution_functionals(a, f, f, 1.0 / 16, 0.8 * np.identity(2), tight)
    assert values.e0_flux_raw == 0.0
    assert values.e0_xi == 0.0
    assert values.pathwise_rhs == 0.0
    assert abs(values.pathwise_lhs) <= 1e-10


def test_pathwise_identity_per_realization(field_16, pack_16, tight):
    f = TestFunction()
    g = TestFunction(kind="dipole", width=0.1)
    for abar_ref in (pack_16.abar, np.array([[0.7, 0.02], [0.0, 0.71]])):
        values = solution_functionals(field_16, f, g, 1.0 / 16, abar_ref, tight, pack=pack_16)
        assert values.pathwise_discrepancy <= 1e-8


def test_pathwise_gate_rejects_loose_solves(field_16, pack_16, tight):
    f = TestFunction()
    loose = SolveConfig(tol=1e-2, preconditioner="none")
    converged = solution_functionals(field_16, f, f, 1.0 / 16, pack_16.abar, tight, pack=pack_16)
    rough = solution_functionals(field_16, f, f, 1.0 / 16, pack_16.abar, loose, pack=pack_16)
    assert converged.pathwise_discrepancy <= 1e-8
    assert rough.pathwise_discrepancy > 1e-8
    # 범함수 크기가 1 보다 훨씬 작아도 상대 차이로 잼
    assert rough.pathwise_scale < 1.0


def test_pathwise_discrepancy_is_relative():
    lhs = 9.8e-4
    values = SolutionFunctionals(i1_raw=0.0, i2_raw=0.0, e0_flux_raw=0.0, e0_xi=0.0,
                                 pathwise_lhs=lhs, pathwise_rhs=lhs * (1.0 - 3.9e-6), pathwise_scale=lhs)
    assert values.pathwise_discrepancy == pytest.approx(3.9e-6, rel=1e-6)
    within_rounding = values.model_copy(update={"pathwise_noise": 1e-8})
    assert within_rounding.pathwise_discrepancy == 0.0


def test_enlarged_box_centres_the_unit_box():
    f = TestFunction()
    small = f.vector_field(TorusGrid(d=2, L=8)).values[:, 0]
    grid = TorusGrid(d=2, L=16)
    large = f.vector_field(grid, box=2).values[:, 0]
    coords = grid.coordinates()
    outside = np.any((coords <= 4) | (coords >= 12), axis=1)
    assert np.all(large[outside] == 0.0)
    # 단위 상자를 가운데로 옮긴 것이므로 노드 값의 합이 같음
    assert large.sum() == pytest.approx(small.sum(), rel=1e-12)
    assert large.max() == pytest.approx(small.max(), rel=1e-12)


def test_epsilon_matches_enlarged_box(pack_16):
    check_epsilon(pack_16.grid, 1.0 / 8, box=2)
    with pytest.raises(ValueError):
        check_epsilon(pack_16.grid, 1.0 / 16, box=2)


def test_pathwise_identity_on_enlarged_box(field_16, pack_16, tight):
    f = TestFunction()
    values = solution_functionals(field_16, f, f, 1.0 / 8, pack_16.abar, tight, pack=pack_16, box=2)
    assert values.pathwise_discrepancy <= 1e-8
    assert values.i1_raw != 0.0


def test_solution_reuse_matches_fresh_solve(field_16, pack_16, tight):
    f = TestFunction()
    U, _ = solve_variable(field_16, f.vector_field(field_16.grid) * (1.0 / 16), tight)
    fresh = solution_functionals(field_16, f, f, 1.0 / 16, pack_16.abar, tight, pack=pack_16)
    reused = solution_functionals(field_16, f, f, 1.0 / 16, pack_16.abar, tight, pack=pack_16, solution=U)
    assert reused.i1_raw == pytest.approx(fresh.i1_raw, rel=1e-12)
    assert reused.e0_xi == pytest.approx(fresh.e0_xi, rel=1e-12)


def test_one_dimensional_i1_matches_closed_form(field_1d, tight):
    f = TestFunction()
    eps = 1.0 / field_1d.grid.L
    reports = []
    values = solution_functionals(field_1d, f, f, eps, np.array([[oracles.harmonic_abar(field_1d)]]),
                                  tight, reports=reports)
    g = f.vector_field(field_1d.grid)
    _, grad = oracles.divergence_form_solution(field_1d, g * eps)
    expected = eps ** -0.5 * np.sum(g.values * grad.values)
    assert values.i1_raw == pytest.approx(expected, rel=1e-9)
    assert [r.purpose for r in reports] == ["solution", "corrector_0"]
