"""
토러스 위 발산형 타원 방정식 솔버

- solve_variable: -∇*·a∇u = ∇*·h (변수 계수, CG)
- solve_constant: -∇*·ā∇u = ∇*·h (상수 계수, 스펙트럼 또는 반복)
- helmholtz_project / leray_project: 이산 Helmholtz, Leray 사영

모든 해는 평균 0 게이지로 고정됩니다 (토러스에서 상수 핵 제거).
"""
import logging
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
import scipy.sparse.linalg as spla

from app.models.lattice import EdgeField, NodeField, TorusGrid
from app.models.solver import SolveConfig, SolveReport
from app.modules.lattice import constant_operator_matrix, gradient_matrix, operator_matrix
from app.settings import SRC_LOG_LEVELS
from app.utils.exceptions import NonConvergence, SingularSymbol

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["MODULE"])

# 대칭성 판정 허용치 (상대)
_SYMMETRY_TOL = 1e-12


#####################################
## 푸리에 기호
#####################################

@lru_cache(maxsize=32)
def _difference_symbols(grid: TorusGrid) -> Tuple[np.ndarray, ...]:
    """방향별 전방 차분의 기호 D_j(θ) = e^{iθ_j} - 1 (np.fft.fftn 규약)"""
    freqs = 2.0 * np.pi * np.fft.fftfreq(grid.L)
    axes = np.meshgrid(*[freqs] * grid.d, indexing="ij")
    return tuple(np.exp(1j * theta) - 1.0 for theta in axes)


@lru_cache(maxsize=32)
def _laplacian_symbol(grid: TorusGrid) -> np.ndarray:
    """-∇*·∇ 의 기호 Σ_j |D_j|², 영 모드는 1 로 두어 나눗셈에 사용"""
    symbol = sum(np.abs(D) ** 2 for D in _difference_symbols(grid))
    symbol = np.array(symbol)
    symbol.flat[0] = 1.0
    return symbol


def _constant_symbol(grid: TorusGrid, abar: np.ndarray) -> np.ndarray:
    """-∇*·ā∇ 의 기호 s(θ) = Σ_jk conj(D_j) ā_jk D_k"""
    D = _difference_symbols(grid)
    symbol = np.zeros(grid.shape, dtype=np.complex128)
    for j in range(grid.d):
        for k in range(grid.d):
            if abar[j, k] != 0.0:
                symbol += np.conj(D[j]) * abar[j, k] * D[k]
    return symbol


def check_positive_definite(abar) -> np.ndarray:
    """
    ā 의 대칭 부분이 양의 정부호인지 확인하고 float64 d×d 배열로 돌려줍니다.

    Raises:
        SingularSymbol: 최소 고유값이 0 이하일 때
    """
    abar = np.atleast_2d(np.asarray(abar, dtype=np.float64))
    if abar.ndim != 2 or abar.shape[0] != abar.shape[1]:
        raise ValueError(f"ā 는 정사각 행렬이어야 합니다: {abar.shape}")
    if not np.all(np.isfinite(abar)):
        raise SingularSymbol("ā 에 유한하지 않은 값이 있습니다", matrix=abar)
    min_eig = float(np.linalg.eigvalsh(0.5 * (abar + abar.T)).min())
    if min_eig <= 0.0:
        raise SingularSymbol(f"ā 가 양의 정부호가 아닙니다 (최소 고유값 {min_eig:.3e})",
                             matrix=abar, min_eigenvalue=min_eig)
    return abar


def _is_symmetric(abar: np.ndarray) -> bool:
    return bool(np.max(np.abs(abar - abar.T)) <= _SYMMETRY_TOL * max(np.max(np.abs(abar)), 1.0))


#####################################
## 변수 계수
#####################################

def _preconditioner(a: EdgeField, A, kind: str) -> Optional[spla.LinearOperator]:
    grid = a.grid
    n = grid.node_count
    if kind == "jacobi":
        inv_diag = 1.0 / A.diagonal()
        return spla.LinearOperator((n, n), matvec=lambda r: inv_diag * np.ravel(r), dtype=np.float64)
    if kind == "constant_coefficient":
        # 평균 전도도를 곱한 격자 라플라시안의 역 (평균 0 부분공간에서 SPD)
        inv_symbol = 1.0 / (float(a.values.mean()) * _laplacian_symbol(grid))
        inv_symbol.flat[0] = 0.0

        def apply(r):
            r_hat = np.fft.fftn(np.reshape(r, grid.shape))
            return np.real(np.fft.ifftn(r_hat * inv_symbol)).ravel()

        return spla.LinearOperator((n, n), matvec=apply, dtype=np.float64)
    return None


def divergence_rhs(h: EdgeField) -> np.ndarray:
    """우변 ∇*·h 를 평탄 배열로 (= -Gᵀh)"""
    return -(gradient_matrix(h.grid).T @ h.values.ravel())


def solve_variable(a: EdgeField, h: EdgeField, cfg: Optional[SolveConfig] = None,
                   x0: Optional[NodeField] = None) -> Tuple[NodeField, SolveReport]:
    """
    -∇*·a∇u = ∇*·h 의 평균 0 해를 켤레기울기법으로 구합니다.

    Args:
        a: 전도도 필드
        h: 발산형 우변
        cfg: 솔버 설정
        x0: 초기 추정값 (기본값 0)

    Returns:
        (u, SolveReport)

    Raises:
        NonConvergence: 최대 반복 횟수 안에 수렴하지 못한 경우 (최선 반복해 포함)
    """
    cfg = cfg or SolveConfig()
    grid = a.grid
    if h.grid != grid:
        raise ValueError("a 와 h 의 격자가 다릅니다")

    b = divergence_rhs(h)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return NodeField.zeros(grid), SolveReport(iterations=0, residual=0.0, backend="cg")

    A = operator_matrix(a)
    M = _preconditioner(a, A, cfg.preconditioner)
    start = None if x0 is None else np.array(x0.values, dtype=np.float64)

    iterations = 0

    def count(_xk):
        nonlocal iterations
        iterations += 1

    x, info = spla.cg(A, b, x0=start, rtol=cfg.tol, atol=0.0,
                      maxiter=cfg.max_iterations, M=M, callback=count)
    x = x - x.mean()
    residual = float(np.linalg.norm(A @ x - b)) / b_norm
    u = NodeField(grid=grid, values=x)

    if info != 0:
        logger.warning(f"CG 미수렴: 반복 {iterations}, 상대 잔차 {residual:.3e} (허용치 {cfg.tol:.1e})")
        raise NonConvergence(f"CG 가 {iterations} 회 반복 후 수렴하지 못했습니다 (잔차 {residual:.3e})",
                             best_iterate=u.values, residual=residual, iterations=iterations)

    logger.debug(f"CG 수렴: d={grid.d}, L={grid.L}, 반복 {iterations}, 잔차 {residual:.3e}")
    return u, SolveReport(iterations=iterations, residual=residual, backend=f"cg+{cfg.preconditioner}")


#####################################
## 상수 계수
#####################################

def _solve_constant_spectral(grid: TorusGrid, abar: np.ndarray, h: EdgeField) -> np.ndarray:
    D = _difference_symbols(grid)
    rhs = np.zeros(grid.shape, dtype=np.complex128)
    for j in range(grid.d):
        rhs -= np.conj(D[j]) * np.fft.fftn(h.values[:, j].reshape(grid.shape))
    symbol = _constant_symbol(grid, abar)
    symbol.flat[0] = 1.0
    u_hat = rhs / symbol
    u_hat.flat[0] = 0.0
    return np.real(np.fft.ifftn(u_hat)).ravel()


def _solve_constant_iterative(grid: TorusGrid, abar: np.ndarray, h: EdgeField, cfg: SolveConfig) -> np.ndarray:
    b = divergence_rhs(h)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(grid.node_count)
    A = constant_operator_matrix(grid, abar)
    inv_symbol = 1.0 / (float(np.trace(abar)) / grid.d * _laplacian_symbol(grid))
    inv_symbol.flat[0] = 0.0
    n = grid.node_count
    M = spla.LinearOperator(
        (n, n),
        matvec=lambda r: np.real(np.fft.ifftn(np.fft.fftn(np.reshape(r, grid.shape)) * inv_symbol)).ravel(),
        dtype=np.float64,
    )
    x, info = spla.cg(A, b, rtol=cfg.tol, atol=0.0, maxiter=cfg.max_iterations, M=M)
    x = x - x.mean()
    if info != 0:
        residual = float(np.linalg.norm(A @ x - b)) / b_norm
        raise NonConvergence(f"상수 계수 CG 미수렴 (잔차 {residual:.3e})",
                             best_iterate=x, residual=residual, iterations=int(info))
    return x


def solve_constant(abar, h: EdgeField, cfg: Optional[SolveConfig] = None) -> NodeField:
    """
    -∇*·ā∇u = ∇*·h 의 평균 0 해.

    spectral 백엔드는 토러스 주파수에서 이산 기호를 대각화하고, iterative 백엔드는
    희소 행렬에 CG 를 적용합니다. 비대칭 ā 는 CG 로 풀 수 없으므로 항상 스펙트럼으로 풉니다.

    Raises:
        SingularSymbol: ā 가 양의 정부호가 아닐 때
    """
    cfg = cfg or SolveConfig()
    grid = h.grid
    abar = check_positive_definite(abar)
    if abar.shape != (grid.d, grid.d):
        raise ValueError(f"ā 크기 {abar.shape} 가 차원 {grid.d} 과 맞지 않습니다")

    if cfg.constant_backend == "iterative" and _is_symmetric(abar):
        values = _solve_constant_iterative(grid, abar, h, cfg)
    else:
        if cfg.constant_backend == "iterative":
            logger.debug("비대칭 ā: 스펙트럼 백엔드로 대체")
        values = _solve_constant_spectral(grid, abar, h)
    return NodeField(grid=grid, values=values)


#####################################
## 사영
#####################################

def _gradient(u: NodeField) -> EdgeField:
    flat = gradient_matrix(u.grid) @ u.values
    return EdgeField(grid=u.grid, values=flat.reshape(u.grid.node_count, u.grid.d))


def helmholtz_project(abar, F: EdgeField, cfg: Optional[SolveConfig] = None, adjoint: bool = False) -> EdgeField:
    """
    P̄_H F = ∇(∇*·ā∇)^{-1}∇*·F.  adjoint=True 이면 āᵀ 를 사용합니다 (P̄_H*).
    """
    abar = check_positive_definite(abar)
    if adjoint:
        abar = abar.T
    w = solve_constant(abar, -F, cfg)
    return _gradient(w)


def leray_project(abar, F: EdgeField, cfg: Optional[SolveConfig] = None, adjoint: bool = False) -> EdgeField:
    """
    P̄_L F = F - P̄_H(āF).  adjoint=True 이면 P̄_L* F = F - P̄_H*(āᵀF).
    """
    abar = check_positive_definite(abar)
    weight = abar.T if adjoint else abar
    aF = EdgeField(grid=F.grid, values=F.values @ weight.T)
    return F - helmholtz_project(abar, aF, cfg, adjoint=adjoint)
