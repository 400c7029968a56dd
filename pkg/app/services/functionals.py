"""
요동 범함수 (격자 단위 리만 합)

ε = 1/n, n 은 토러스 한 변. 연속 적분 ∫ dx 는 ε^d Σ_x 로, 거시 좌표의 테스트 함수는
노드 x 에서 ε·x 로 샘플링합니다 (조각별 상수 확장).

- J0(F) = ε^{d/2} Σ_x F(εx):Ξ(x)
- J1(F) = ε^{d/2} Σ_x F(εx):∇φ(x)
- J2(F) = ε^{d/2} Σ_x F(εx):(a(∇φ + Id) - ā_ref)
- I1, I2, E₀ 는 solution_functionals 참조
"""
import logging
from typing import List, Optional, Tuple, Union

import numpy as np

from app.models.corrector import CommutatorField, CorrectorPack
from app.models.lattice import EdgeField, MatrixField, NodeField, TorusGrid
from app.models.solver import SolveConfig, SolveRecord
from app.models.stats import SolutionFunctionals, TestFunction
from app.modules.elliptic_solver import solve_constant, solve_variable
from app.modules.lattice import forward_gradient
from app.services.correctors import build_pack, commutator
from app.settings import SRC_LOG_LEVELS

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["SERVICE"])

TensorLike = Union[TestFunction, MatrixField]


def check_epsilon(grid: TorusGrid, eps: float, box: int = 1) -> None:
    """토러스 한 변 L = box / ε 인지 확인 (box 는 거시 상자 한 변)"""
    if abs(eps * grid.L - box) > 1e-9 * box:
        raise ValueError(f"ε={eps} 는 box/L = {box}/{grid.L} 이어야 합니다")


def _tensor_values(F: TensorLike, grid: TorusGrid) -> np.ndarray:
    if isinstance(F, TestFunction):
        return F.tensor_field(grid).values
    if F.grid != grid:
        raise ValueError("F 와 Ξ 의 격자가 다릅니다")
    return F.values


def j0_functional(xi: CommutatorField, F: TensorLike, eps: float) -> float:
    """
    J0^ε(F) = ε^{d/2} Σ_x F(εx):Ξ(x)

    Args:
        xi: 한 변 n = 1/ε 토러스 위의 Ξ
        F: 테스트 함수 또는 이미 이산화된 행렬장
        eps: ε

    Raises:
        SupportOverflow: F 의 지지가 상자 절반을 넘을 때
    """
    grid = xi.grid
    check_epsilon(grid, eps)
    return eps ** (grid.d / 2.0) * float(np.sum(_tensor_values(F, grid) * xi.xi.values))


def _corrector_gradient_matrix(pack: CorrectorPack) -> np.ndarray:
    # [x, i, j] = ∇_jφ_i(x)
    return np.stack([forward_gradient(p).values for p in pack.phi], axis=1)


def corrector_functionals(pack: CorrectorPack, F: TensorLike, eps: float,
                          abar_ref=None) -> Tuple[float, float]:
    """
    (J1^ε(F), J2^ε(F)). ā_ref 를 생략하면 실현별 ā_L 을 씁니다.

    Raises:
        SupportOverflow
    """
    grid = pack.grid
    check_epsilon(grid, eps)
    abar_ref = np.asarray(pack.abar if abar_ref is None else abar_ref, dtype=np.float64)
    Fv = _tensor_values(F, grid)
    grad_phi = _corrector_gradient_matrix(pack)

    identity = np.identity(grid.d)
    # [x, i, j] = e_j·(a(∇φ_i + e_i) - ā_ref e_i)
    flux = pack.a.values[:, None, :] * (grad_phi + identity) - abar_ref.T[None, :, :]
    scale = eps ** (grid.d / 2.0)
    return scale * float(np.sum(Fv * grad_phi)), scale * float(np.sum(Fv * flux))


def solution_functionals(a: EdgeField, f: TestFunction, g: TestFunction, eps: float,
                         abar_ref, cfg: Optional[SolveConfig] = None,
                         pack: Optional[CorrectorPack] = None,
                         reports: Optional[List[SolveRecord]] = None,
                         solution: Optional[NodeField] = None,
                         box: int = 1) -> SolutionFunctionals:
    """
    해 기반 범함수의 중심화 전 값.

    U:  -∇*·a∇U = ∇*·(εf_ε)   (u_ε(ε·))
    Ũ:  -∇*·ā∇Ũ = ∇*·(εf_ε)   (ū_ε)
    V:  -∇*·āᵀ∇V = ∇*·(εg_ε)  (ṽ_ε)

    경로별 항등식 Σ εg_ε·∇(U - Ũ) = Σ ∇V·(a - ā)∇U 의 양변을 따로 계산해 돌려줍니다.

    Args:
        a: 한 변 box / ε 의 전도도 필드
        f, g: 벡터 테스트 함수
        eps: ε
        abar_ref: 상수 계수 ā
        cfg: 솔버 설정
        pack: 같은 a 의 교정자 묶음 (없으면 새로 풂, Ξ 계산용)
        reports: 주어지면 풀이 기록을 덧붙임
        solution: 이미 구한 U (ā_ref 만 바꿔 다시 계산할 때)
        box: 거시 상자 한 변 (토러스 한 변 = box / ε, 테스트 함수는 상자 가운데)

    Raises:
        NonConvergence, SupportOverflow
    """
    grid = a.grid
    check_epsilon(grid, eps, box)
    abar_ref = np.asarray(abar_ref, dtype=np.float64)
    d = grid.d

    f_eps = f.vector_field(grid, box) * eps
    g_eps = g.vector_field(grid, box)

    if solution is None:
        U, report = solve_variable(a, f_eps, cfg)
        if reports is not None:
            reports.append(SolveRecord(purpose="solution", **report.model_dump()))
    else:
        U = solution
    U_bar = solve_constant(abar_ref, f_eps, cfg)
    V = solve_constant(abar_ref.T, g_eps * eps, cfg)

    grad_U = forward_gradient(U).values
    grad_U_bar = forward_gradient(U_bar).values
    grad_V = forward_gradient(V).values
    a_grad_U = a.values * grad_U
    commutator_flux = a_grad_U - grad_U @ abar_ref.T

    if pack is None:
        pack = build_pack(a, cfg, with_flux_corrector=False)
        if reports is not None:
            reports.extend(pack.reports)
    xi = commutator(a, pack.phi, abar_ref).xi.values
    # (Ξ_i ∇_iŪ)_j = Σ_i Ξ_ij ∇_iŪ
    xi_grad = np.einsum("xij,xi->xj", xi, grad_U_bar)

    scale = eps ** (d / 2.0 - 1.0)
    lhs_terms = eps * g_eps.values * (grad_U - grad_U_bar)
    rhs_terms = grad_V * commutator_flux
    lhs, rhs = float(np.sum(lhs_terms)), float(np.sum(rhs_terms))
    # 합 하나의 반올림 오차 한계 ~ n·u·Σ|항|
    magnitude = float(np.sum(np.abs(lhs_terms)) + np.sum(np.abs(rhs_terms)))
    noise = grid.node_count * d * np.finfo(np.float64).eps * magnitude
    return SolutionFunctionals(
        i1_raw=scale * float(np.sum(g_eps.values * grad_U)),
        i2_raw=scale * float(np.sum(g_eps.values * a_grad_U)),
        e0_flux_raw=scale * float(np.sum(g_eps.values * commutator_flux)),
        e0_xi=scale * float(np.sum(g_eps.values * xi_grad)),
        pathwise_lhs=lhs,
        pathwise_rhs=rhs,
        pathwise_scale=max(abs(lhs), abs(rhs)),
        pathwise_noise=noise,
    )
