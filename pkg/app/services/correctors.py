"""
교정자 파이프라인 서비스 (실현 하나)

φ_L → ā_L → q → σ_L → Ξ 순서로 계산하고, 단일 변 재표본에 대한 Ξ 의 수직 미분
표현식을 두 가지 방법으로 비교합니다.
"""
import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.models.corrector import CommutatorField, CorrectorPack, VerticalDerivativeResult
from app.models.lattice import EdgeField, MatrixField, NodeField, TorusGrid
from app.models.law import ConductanceLaw, EdgePerturbation, SeedSpec
from app.models.solver import SolveConfig, SolveRecord, SolveReport
from app.modules.elliptic_solver import divergence_rhs, solve_constant, solve_variable
from app.modules.lattice import (
    MAX_CSV_NODES,
    backward_divergence,
    constant_operator_matrix,
    forward_gradient,
    load_field,
    save_field,
    save_field_csv,
)
from app.modules.random_fields import resample_edge
from app.settings import SRC_LOG_LEVELS

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["SERVICE"])


#####################################
## φ, ā_L, q
#####################################

def _solve_corrector(a: EdgeField, i: int, cfg: Optional[SolveConfig] = None,
                     x0: Optional[NodeField] = None) -> Tuple[NodeField, SolveReport]:
    # -∇*·a(∇φ + e_i) = 0  ⇔  -∇*·a∇φ = ∇*·(a e_i)
    values = np.zeros_like(a.values)
    values[:, i] = a.values[:, i]
    return solve_variable(a, EdgeField(grid=a.grid, values=values), cfg, x0=x0)


def solve_corrector(a: EdgeField, i: int, cfg: Optional[SolveConfig] = None) -> NodeField:
    """
    주기 교정자 φ_{L,i}: -∇*·a(∇φ + e_i) = 0, Σ_z φ(z) = 0

    Raises:
        NonConvergence: 솔버 미수렴
    """
    if not (0 <= i < a.grid.d):
        raise ValueError(f"방향 {i} 가 차원 {a.grid.d} 범위를 벗어났습니다")
    return _solve_corrector(a, i, cfg)[0]


def _gradient_plus_unit(phi: NodeField, i: int) -> np.ndarray:
    values = np.array(forward_gradient(phi).values)
    values[:, i] += 1.0
    return values


def homogenized_coefficient(a: EdgeField, phi: Sequence[NodeField]) -> np.ndarray:
    """ā_L e_i := ⨍ a(∇φ_{L,i} + e_i)"""
    d = a.grid.d
    abar = np.zeros((d, d))
    for i in range(d):
        abar[:, i] = (a.values * _gradient_plus_unit(phi[i], i)).mean(axis=0)
    return abar


def fluxes(a: EdgeField, phi: Sequence[NodeField], abar: np.ndarray) -> List[EdgeField]:
    """q_i = a(∇φ_i + e_i) - ā_L e_i (평균 0)"""
    return [
        EdgeField(grid=a.grid, values=a.values * _gradient_plus_unit(phi[i], i) - abar[:, i])
        for i in range(a.grid.d)
    ]


#####################################
## σ
#####################################

def _unit_shift(d: int, k: int, step: int) -> Tuple[int, ...]:
    shift = [0] * d
    shift[k] = step
    return tuple(shift)


def _laplace_residual(grid: TorusGrid, sigma: np.ndarray, h: EdgeField) -> float:
    b = divergence_rhs(h)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return 0.0
    A = constant_operator_matrix(grid, np.identity(grid.d))
    return float(np.linalg.norm(A @ sigma - b)) / b_norm


def solve_flux_corrector(a: EdgeField, phi: Sequence[NodeField], abar: np.ndarray,
                         cfg: Optional[SolveConfig] = None) -> Tuple[np.ndarray, List[SolveRecord]]:
    """
    flux corrector σ_ijk: -∇*·∇σ_ijk = ∇_j q_ik - ∇_k q_ij, 평균 0.

    우변을 발산형으로 씁니다: ∇_j f = ∇*_j f(· + e_j). j < k 만 풀고 σ_ikj = -σ_ijk 로 채웁니다.
    그러면 Σ_k ∇*_k σ_ijk = q_ij 가 성립합니다.

    Returns:
        (sigma[i, j, k, node] 배열, 풀이 기록)
    """
    grid = a.grid
    d = grid.d
    identity = np.identity(d)
    q = fluxes(a, phi, abar)
    sigma = np.zeros((d, d, d, grid.node_count))
    records: List[SolveRecord] = []

    for i in range(d):
        for j in range(d):
            for k in range(j + 1, d):
                h = np.zeros((grid.node_count, d))
                # f(x + e_j) = f.shifted(-e_j)(x)
                h[:, j] = q[i].shifted(_unit_shift(d, j, -1)).values[:, k]
                h[:, k] = -q[i].shifted(_unit_shift(d, k, -1)).values[:, j]
                rhs = EdgeField(grid=grid, values=h)
                s = solve_constant(identity, rhs, cfg).values
                sigma[i, j, k] = s
                sigma[i, k, j] = -s
                records.append(SolveRecord(
                    purpose=f"flux_corrector_{i}_{j}_{k}",
                    residual=_laplace_residual(grid, s, rhs),
                    backend=f"constant+{(cfg or SolveConfig()).constant_backend}",
                ))
    return sigma, records


def flux_corrector_divergence(sigma: np.ndarray, grid: TorusGrid, i: int) -> EdgeField:
    """(∇*·σ_i)_j = Σ_k ∇*_k σ_ijk"""
    d = grid.d
    values = np.zeros((grid.node_count, d))
    for j in range(d):
        row = EdgeField(grid=grid, values=np.stack([sigma[i, j, k] for k in range(d)], axis=-1))
        values[:, j] = backward_divergence(row).values
    return EdgeField(grid=grid, values=values)


#####################################
## 파이프라인
#####################################

def build_pack(a: EdgeField, cfg: Optional[SolveConfig] = None, with_flux_corrector: bool = True,
               seed: Optional[SeedSpec] = None) -> CorrectorPack:
    """
    교정자 파이프라인 전체를 실행합니다.

    Args:
        a: 전도도 필드
        cfg: 솔버 설정
        with_flux_corrector: σ 까지 계산할지 여부 (RVE 처럼 ā_L 만 필요하면 False)
        seed: 재현용 시드 (sidecar 에 기록)

    Raises:
        NonConvergence: 어느 풀이든 미수렴이면 전파
    """
    d = a.grid.d
    phi: List[NodeField] = []
    records: List[SolveRecord] = []
    for i in range(d):
        phi_i, report = _solve_corrector(a, i, cfg)
        phi.append(phi_i)
        records.append(SolveRecord(purpose=f"corrector_{i}", **report.model_dump()))

    abar = homogenized_coefficient(a, phi)
    sigma = None
    if with_flux_corrector:
        sigma, sigma_records = solve_flux_corrector(a, phi, abar, cfg)
        records.extend(sigma_records)

    return CorrectorPack(a=a, phi=phi, flux=fluxes(a, phi, abar), abar=abar,
                         sigma=sigma, reports=records, seed=seed)


def commutator(a: EdgeField, phi: Sequence[NodeField], abar_ref) -> CommutatorField:
    """Ξ_ij(x) = a_jj(x)(∇_jφ_i(x) + δ_ij) - (ā_ref(∇φ_i(x) + e_i))_j"""
    abar_ref = np.asarray(abar_ref, dtype=np.float64)
    rows = []
    for i in range(a.grid.d):
        G = _gradient_plus_unit(phi[i], i)
        rows.append(a.values * G - G @ abar_ref.T)
    xi = MatrixField(grid=a.grid, values=np.stack(rows, axis=1))
    return CommutatorField(xi=xi, abar_ref=abar_ref)


def pack_commutator(pack: CorrectorPack, abar_ref=None) -> CommutatorField:
    """ā_ref 를 주지 않으면 실현별 ā_L 사용 (평균 Ξ = 0)"""
    return commutator(pack.a, pack.phi, pack.abar if abar_ref is None else abar_ref)


#####################################
## 수직 미분 표현식
#####################################


def _roll(view: np.ndarray, k: int, step: int) -> np.ndarray:
    # step=+1 이면 out(x) = view(x + e_k)
    return np.roll(view, -step, axis=k)


def representation_formula(pack: CorrectorPack, perturbed_phi: Sequence[NodeField],
                           perturbation: EdgePerturbation) -> Tuple[np.ndarray, np.ndarray]:
    """
    Δ_bΞ_ij 의 네 항 표현식 (대칭 계수: φ* = φ, σ* = σ).

        (∇φ_j + e_j)·Δ_b a(∇φ_i^b + e_i)
        - Σ_k ∇*_k( φ_j(·+e_k) Δ_b a_k (∇_kφ_i^b + δ_ik) )
        - Σ_k ∇*_k( φ_j(·+e_k) a_k ∇_kΔ_bφ_i )
        - Σ_kl ∇_k( σ_jkl(·-e_k) ∇_lΔ_bφ_i )

    Returns:
        (node_count × d × d 배열 [x, i, j], 첫 항만의 배열)
    """
    grid = pack.grid
    d = grid.d
    shape = grid.shape
    if not pack.has_flux_corrector:
        raise ValueError("표현식에는 flux corrector 가 필요합니다")

    delta_a = np.zeros((grid.node_count, d))
    delta_a[perturbation.node, perturbation.direction] = perturbation.delta
    a_view = [pack.a.values[:, k].reshape(shape) for k in range(d)]
    da_view = [delta_a[:, k].reshape(shape) for k in range(d)]
    phi_view = [p.values.reshape(shape) for p in pack.phi]

    total = np.zeros((grid.node_count, d, d))
    first = np.zeros((grid.node_count, d, d))

    for i in range(d):
        grad_b = _gradient_plus_unit(perturbed_phi[i], i)
        w = NodeField(grid=grid, values=pack.phi[i].values - perturbed_phi[i].values)
        grad_w = forward_gradient(w).values
        gb_view = [grad_b[:, k].reshape(shape) for k in range(d)]
        gw_view = [grad_w[:, k].reshape(shape) for k in range(d)]

        for j in range(d):
            grad_j = _gradient_plus_unit(pack.phi[j], j)
            term1 = np.sum(grad_j * delta_a * grad_b, axis=1).reshape(shape)
            rest = np.zeros(shape)
            phi_plus = [_roll(phi_view[j], k, 1) for k in range(d)]
            for k in range(d):
                f2 = phi_plus[k] * da_view[k] * gb_view[k]
                f3 = phi_plus[k] * a_view[k] * gw_view[k]
                # ∇*_k f = f - f(· - e_k)
                rest -= (f2 - _roll(f2, k, -1)) + (f3 - _roll(f3, k, -1))
                for l in range(d):
                    s = _roll(pack.sigma[j, k, l].reshape(shape), k, -1) * gw_view[l]
                    # ∇_k f = f(· + e_k) - f
                    rest -= _roll(s, k, 1) - s
            first[:, i, j] = term1.ravel()
            total[:, i, j] = (term1 + rest).ravel()
    return total, first


def vertical_derivative_check(a: EdgeField, edge: Tuple[int, int], seed: SeedSpec, law: ConductanceLaw,
                              cfg: Optional[SolveConfig] = None,
                              pack: Optional[CorrectorPack] = None) -> VerticalDerivativeResult:
    """
    변 b 를 재표본한 a^b 에 대해 Δ_bΞ = Ξ(a) - Ξ(a^b) 를
    (i) 두 번의 전체 교정자 풀이로 직접, (ii) 네 항 표현식으로 계산해 최대 점별 차이를 돌려줍니다.

    두 Ξ 모두 같은 기준 ā_ref = ā_L(a)ᵀ 를 사용합니다. 이 기준은 q 와 σ 를 만든 ā_L 과
    맞물려 (a - ā_ref)ᵀe_j = -a∇φ_j + ∇*·σ_j 를 정확히 만족시킵니다.

    Raises:
        NonConvergence: 솔버 미수렴
    """
    if pack is None:
        pack = build_pack(a, cfg, with_flux_corrector=True, seed=seed)
    elif not pack.has_flux_corrector:
        raise ValueError("pack 에 flux corrector 가 없습니다")

    perturbed, perturbation = resample_edge(a, edge, seed, law)
    d = a.grid.d
    if perturbation.delta == 0.0:
        perturbed_phi = list(pack.phi)
    else:
        perturbed_phi = [_solve_corrector(perturbed, i, cfg, x0=pack.phi[i])[0] for i in range(d)]

    abar_ref = np.array(pack.abar).T
    direct = commutator(a, pack.phi, abar_ref).xi.values - commutator(perturbed, perturbed_phi, abar_ref).xi.values
    formula, first = representation_formula(pack, perturbed_phi, perturbation)

    discrepancy = float(np.max(np.abs(direct - formula)))
    scale = float(np.max(np.abs(direct)))
    support = sorted(int(n) for n in np.unique(np.nonzero(np.abs(first) > 0.0)[0]))
    logger.debug(f"수직 미분 검사: 변 {edge}, Δa={perturbation.delta:.3g}, 차이 {discrepancy:.3e}, 크기 {scale:.3e}")
    return VerticalDerivativeResult(perturbation=perturbation, discrepancy=discrepancy,
                                    scale=scale, first_term_nodes=support)


#####################################
## 저장 / 불러오기
#####################################

def save_pack(pack: CorrectorPack, directory: Union[str, Path]) -> Path:
    """
    필드 묶음을 격자 이진 형식으로, ā_L 과 풀이 기록은 JSON sidecar 로 저장합니다.
    작은 격자 (MAX_CSV_NODES 이하) 에서는 a, φ 를 CSV 로도 남깁니다.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid = pack.grid
    phi = NodeField(grid=grid, values=np.stack([p.values for p in pack.phi], axis=-1))
    save_field(pack.a, directory / "a.bin")
    save_field(phi, directory / "phi.bin")
    if grid.node_count <= MAX_CSV_NODES:
        save_field_csv(pack.a, directory / "a.csv")
        save_field_csv(phi, directory / "phi.csv")
    if pack.has_flux_corrector:
        flat = pack.sigma.reshape(-1, grid.node_count).T
        save_field(NodeField(grid=grid, values=flat), directory / "sigma.bin")

    sidecar = {
        "d": grid.d,
        "L": grid.L,
        "abar": pack.abar.tolist(),
        "has_sigma": pack.has_flux_corrector,
        "reports": [r.model_dump() for r in pack.reports],
        "seed": pack.seed.model_dump() if pack.seed else None,
    }
    path = directory / "pack.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(sidecar, f, ensure_ascii=False, indent=2)
    return path


def load_pack(directory: Union[str, Path]) -> CorrectorPack:
    """save_pack 으로 저장한 묶음을 읽습니다. q 는 a, φ, ā_L 로 다시 계산합니다."""
    directory = Path(directory)
    with open(directory / "pack.json", "r", encoding="utf-8") as f:
        sidecar = json.load(f)

    a = load_field(directory / "a.bin", EdgeField)
    grid = a.grid
    d = grid.d
    phi_all = load_field(directory / "phi.bin", NodeField).values.reshape(grid.node_count, d)
    phi = [NodeField(grid=grid, values=phi_all[:, i]) for i in range(d)]
    sigma = None
    if sidecar["has_sigma"]:
        flat = load_field(directory / "sigma.bin", NodeField).values.reshape(grid.node_count, d ** 3)
        sigma = flat.T.reshape(d, d, d, grid.node_count)

    abar = np.array(sidecar["abar"], dtype=np.float64)
    return CorrectorPack(
        a=a, phi=phi, flux=fluxes(a, phi, abar), abar=abar, sigma=sigma,
        reports=[SolveRecord(**r) for r in sidecar["reports"]],
        seed=SeedSpec(**sidecar["seed"]) if sidecar["seed"] else None,
    )
