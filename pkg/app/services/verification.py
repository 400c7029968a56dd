"""
이산 항등식 검사 모음

작은 격자에서 부분합 공식, 사영 항등식, flux corrector 의 반대칭성과 발산 관계, Ξ 의 수직 미분
표현식, 경로별 항등식, J1/J2 와 J0 의 관계, (d=1 이면) 닫힌 형태 해와의 일치를 검사합니다.

기준값은 verify.tolerance 의 배수이며, 검사에 쓰는 풀이는 max(1e-2 × tolerance, 1e-13) 으로
더 엄격하게 풀어서 정지 조건이 아니라 항등식 자체의 차이를 재도록 합니다.
"""
import logging
from typing import Callable, List, Sequence

import numpy as np

from app.models.corrector import CorrectorPack
from app.models.experiment import CheckResult, ExperimentConfig, VerifyReport
from app.models.lattice import EdgeField, MatrixField, NodeField, TorusGrid
from app.models.law import SeedSpec
from app.models.solver import SolveConfig
from app.modules.elliptic_solver import helmholtz_project, leray_project, solve_constant, solve_variable
from app.modules.lattice import backward_divergence, forward_gradient
from app.modules.random_fields import generator_for, sample_field
from app.services import oracles
from app.services.correctors import (
    build_pack,
    commutator,
    flux_corrector_divergence,
    pack_commutator,
    vertical_derivative_check,
)
from app.services.functionals import corrector_functionals, j0_functional, solution_functionals
from app.services.rve import fluctuation_tensor, rve_q_from_commutators
from app.settings import SRC_LOG_LEVELS

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["SERVICE"])

# 부분합 공식은 반올림 오차만 남으므로 별도 기준
SUMMATION_BY_PARTS_TOLERANCE = 1e-12


def _scale(*arrays) -> float:
    """상대 차이의 분모: 기준 배열들의 최대 절댓값 (0 나눗셈만 막음)"""
    return max([np.finfo(np.float64).tiny] + [float(np.max(np.abs(np.asarray(x)))) for x in arrays if np.size(x)])


class IdentityVerifier:
    """
    항등식 검사 실행기.

    각 검사는 CheckResult 를 돌려주며, 하나라도 기준을 넘으면 리포트 전체가 실패입니다.
    """

    def __init__(self):
        self.tolerance = 1e-10
        self.cfg = SolveConfig()
        self.results: List[CheckResult] = []

    def _record(self, name: str, discrepancy: float, threshold: float, detail: str = "") -> CheckResult:
        result = CheckResult(name=name, discrepancy=float(discrepancy), threshold=float(threshold),
                             passed=bool(discrepancy <= threshold), detail=detail)
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, f"[{'통과' if result.passed else '실패'}] {name}: 차이 {discrepancy:.3e} (기준 {threshold:.1e}) {detail}")
        self.results.append(result)
        return result

    def _guarded(self, name: str, threshold: float, check: Callable[[], float], detail: str = "") -> None:
        try:
            self._record(name, check(), threshold, detail)
        except Exception as e:
            logger.error(f"검사 {name} 실행 오류: {type(e).__name__}: {e}")
            self._record(name, float("inf"), threshold, f"{type(e).__name__}: {e}")

    #####################################
    ## 격자 연산
    #####################################

    def summation_by_parts(self, grid: TorusGrid, seed: SeedSpec) -> float:
        """Σ∇u·F + Σu(∇*·F) 의 상대 크기"""
        rng = generator_for(seed.with_purpose("verify_sbp"))
        u = NodeField(grid=grid, values=rng.standard_normal(grid.node_count))
        F = EdgeField(grid=grid, values=rng.standard_normal((grid.node_count, grid.d)))
        grad = forward_gradient(u).values
        lhs = float(np.sum(grad * F.values))
        rhs = -float(np.sum(u.values * backward_divergence(F).values))
        return abs(lhs - rhs) / max(float(np.sum(np.abs(grad * F.values))), 1.0)

    #####################################
    ## flux corrector
    #####################################

    def flux_corrector_skew(self, pack: CorrectorPack) -> float:
        sigma = pack.sigma
        return float(np.max(np.abs(sigma + np.swapaxes(sigma, 1, 2))))

    def flux_corrector_divergence(self, pack: CorrectorPack) -> float:
        worst = 0.0
        for i in range(pack.d):
            div = flux_corrector_divergence(pack.sigma, pack.grid, i).values
            q = pack.flux[i].values
            worst = max(worst, float(np.max(np.abs(div - q))) / _scale(q))
        return worst

    #####################################
    ## 사영
    #####################################

    def _random_edge_field(self, grid: TorusGrid, seed: SeedSpec, purpose: str) -> EdgeField:
        rng = generator_for(seed.with_purpose(purpose))
        return EdgeField(grid=grid, values=rng.standard_normal((grid.node_count, grid.d)))

    def helmholtz_gradient(self, abar: np.ndarray, grid: TorusGrid, seed: SeedSpec) -> float:
        """P̄_H(ā∇u) = ∇u"""
        rng = generator_for(seed.with_purpose("verify_potential"))
        grad_u = forward_gradient(NodeField(grid=grid, values=rng.standard_normal(grid.node_count)))
        projected = helmholtz_project(abar, EdgeField(grid=grid, values=grad_u.values @ abar.T), self.cfg)
        return float(np.max(np.abs(projected.values - grad_u.values))) / _scale(grad_u.values)

    def helmholtz_idempotent(self, abar: np.ndarray, F: EdgeField) -> float:
        """P̄_H ā P̄_H F = P̄_H F"""
        once = helmholtz_project(abar, F, self.cfg)
        twice = helmholtz_project(abar, EdgeField(grid=F.grid, values=once.values @ abar.T), self.cfg)
        return float(np.max(np.abs(twice.values - once.values))) / _scale(once.values)

    def leray_idempotent(self, abar: np.ndarray, F: EdgeField) -> float:
        once = leray_project(abar, F, self.cfg)
        twice = leray_project(abar, once, self.cfg)
        return float(np.max(np.abs(twice.values - once.values))) / _scale(F.values)

    def leray_divergence_free(self, abar: np.ndarray, F: EdgeField) -> float:
        """∇*·(ā P̄_L F) = 0"""
        projected = leray_project(abar, F, self.cfg)
        div = backward_divergence(EdgeField(grid=F.grid, values=projected.values @ abar.T)).values
        return float(np.max(np.abs(div))) / _scale(F.values)

    def leray_gradient_kernel(self, abar: np.ndarray, grid: TorusGrid, seed: SeedSpec) -> float:
        """P̄_L ∇u = 0"""
        rng = generator_for(seed.with_purpose("verify_potential"))
        grad_u = forward_gradient(NodeField(grid=grid, values=rng.standard_normal(grid.node_count)))
        return float(np.max(np.abs(leray_project(abar, grad_u, self.cfg).values))) / _scale(grad_u.values)

    def constant_backend_agreement(self, abar: np.ndarray, F: EdgeField) -> float:
        """대칭 ā 에 대해 스펙트럼 해와 CG 해의 차이"""
        sym = 0.5 * (abar + abar.T)
        spectral = solve_constant(sym, F, self.cfg.model_copy(update={"constant_backend": "spectral"}))
        iterative = solve_constant(sym, F, self.cfg.model_copy(update={"constant_backend": "iterative"}))
        return float(np.max(np.abs(spectral.values - iterative.values))) / _scale(spectral.values)

    #####################################
    ## 범함수
    #####################################

    def tensor_relations(self, pack: CorrectorPack, abar_ref: np.ndarray, config: ExperimentConfig):
        """
        (J1(F) + J0(P̄_H* F), J2(F) - J0(P̄_L* F)) 의 상대 크기.
        같은 ā_ref 를 Ξ, q, 사영에 모두 쓰면 토러스에서 정확한 항등식입니다.
        """
        grid = pack.grid
        eps = 1.0 / grid.L
        F = config.tensor_function.tensor_field(grid)
        xi = pack_commutator(pack, abar_ref)
        j1, j2 = corrector_functionals(pack, F, eps, abar_ref)

        helm = MatrixField.from_rows([helmholtz_project(abar_ref, F.row(i), self.cfg, adjoint=True)
                                      for i in range(grid.d)])
        leray = MatrixField.from_rows([leray_project(abar_ref, F.row(i), self.cfg, adjoint=True)
                                       for i in range(grid.d)])
        j1_rel = abs(j1 + j0_functional(xi, helm, eps)) / max(abs(j1), 1.0)
        j2_rel = abs(j2 - j0_functional(xi, leray, eps)) / max(abs(j2), 1.0)
        return j1_rel, j2_rel

    def pathwise(self, pack: CorrectorPack, abar_ref: np.ndarray, config: ExperimentConfig) -> float:
        grid = pack.grid
        f = config.vector_function
        values = solution_functionals(pack.a, f, f, 1.0 / grid.L, abar_ref, self.cfg, pack=pack)
        return values.pathwise_discrepancy

    def commutator_form_of_q(self, packs: Sequence[CorrectorPack]) -> float:
        """Q_{L,N} 직접 공식 = ā_ref = ā_{L,N} 로 만든 ⨍Ξ 의 외적 평균"""
        L = packs[0].grid.L
        abars = np.stack([np.array(p.abar) for p in packs])
        direct = fluctuation_tensor(abars, L)
        mean = abars.mean(axis=0)
        xi_means = np.stack([pack_commutator(p, mean).mean() for p in packs])
        return float(np.max(np.abs(rve_q_from_commutators(xi_means, L) - direct))) / _scale(direct)

    #####################################
    ## d = 1 닫힌 형태
    #####################################

    def one_dimensional_oracles(self, pack: CorrectorPack, config: ExperimentConfig) -> None:
        threshold = 10.0 * self.tolerance
        a = pack.a
        grid = a.grid
        abar = oracles.harmonic_abar(a)

        self._guarded("oracle_abar", threshold, lambda: abs(float(pack.abar[0, 0]) - abar) / abar)
        self._guarded("oracle_corrector_gradient", threshold, lambda: float(np.max(np.abs(
            pack.corrector_gradient(0).values - 1.0 - oracles.corrector_gradient(a).values))))
        self._guarded("oracle_commutator", threshold, lambda: float(np.max(np.abs(
            commutator(a, pack.phi, np.array([[abar]])).xi.values[:, 0, 0] - oracles.commutator_values(a)))))

        eps = 1.0 / grid.L
        f = config.vector_function
        h = f.vector_field(grid) * eps

        def solution_gap() -> float:
            u, _ = solve_variable(a, h, self.cfg)
            exact, _ = oracles.divergence_form_solution(a, h)
            return float(np.max(np.abs(u.values - exact.values))) / _scale(exact.values)

        def i1_gap() -> float:
            _, grad = oracles.divergence_form_solution(a, h)
            g = f.vector_field(grid).values
            i1_exact = eps ** (grid.d / 2.0 - 1.0) * float(np.sum(g * grad.values))
            value = solution_functionals(a, f, f, eps, pack.abar, self.cfg, pack=pack).i1_raw
            return abs(value - i1_exact) / max(abs(i1_exact), 1.0)

        self._guarded("oracle_solution", threshold, solution_gap)
        self._guarded("oracle_i1", threshold, i1_gap)

    #####################################
    ## 실행
    #####################################

    def run(self, config: ExperimentConfig) -> VerifyReport:
        """
        전체 검사를 실행하고 리포트를 돌려줍니다.

        Args:
            config: 실험 설정 (verify 섹션, d, 법칙, 시드, 솔버)

        Returns:
            VerifyReport: 검사별 최대 차이와 통과 여부
        """
        vcfg = config.verify
        self.tolerance = vcfg.tolerance
        self.cfg = config.solver.tightened(max(1e-2 * vcfg.tolerance, 1e-13))
        self.results = []
        tol = vcfg.tolerance
        grid = TorusGrid(d=config.d, L=vcfg.side)
        base = SeedSpec(master_seed=config.master_seed, purpose="verify")
        logger.info(f"항등식 검사 시작: d={grid.d}, L={grid.L}, 허용치 {tol:g}, 풀이 허용치 {self.cfg.tol:g}")

        self._guarded("summation_by_parts", min(SUMMATION_BY_PARTS_TOLERANCE, tol),
                      lambda: self.summation_by_parts(grid, base))

        packs: List[CorrectorPack] = []
        for r in range(vcfg.realizations):
            seed = base.for_realization(r)
            try:
                packs.append(build_pack(sample_field(grid, config.law, seed), self.cfg,
                                        with_flux_corrector=True, seed=seed))
            except Exception as e:
                self._record(f"corrector_pipeline_{r}", float("inf"), 0.0, f"{type(e).__name__}: {e}")

        if packs:
            pack = packs[0]
            abar = np.array(pack.abar)
            F = self._random_edge_field(grid, base, "verify_projection")

            self._guarded("flux_corrector_skew", 10 * tol,
                          lambda: max(self.flux_corrector_skew(p) for p in packs))
            self._guarded("flux_corrector_divergence", 10 * tol,
                          lambda: max(self.flux_corrector_divergence(p) for p in packs))
            self._guarded("helmholtz_gradient", 10 * tol, lambda: self.helmholtz_gradient(abar, grid, base))
            self._guarded("helmholtz_idempotent", 10 * tol, lambda: self.helmholtz_idempotent(abar, F))
            self._guarded("leray_idempotent", 10 * tol, lambda: self.leray_idempotent(abar, F))
            self._guarded("leray_divergence_free", 10 * tol, lambda: self.leray_divergence_free(abar, F))
            self._guarded("leray_gradient_kernel", 10 * tol, lambda: self.leray_gradient_kernel(abar, grid, base))
            self._guarded("constant_backend_agreement", 10 * tol, lambda: self.constant_backend_agreement(abar, F))

            self._guarded("vertical_derivative", 100 * tol, lambda: self._vertical_derivatives(packs, config, base),
                          detail=f"{vcfg.pairs} 쌍")
            self._guarded("pathwise_identity", 100 * tol,
                          lambda: max(self.pathwise(p, np.array(p.abar), config) for p in packs),
                          detail=f"실현 {len(packs)} 개")

            try:
                relations = [self.tensor_relations(p, np.array(p.abar), config) for p in packs]
            except Exception as e:
                logger.error(f"J1/J2 관계 검사 실행 오류: {type(e).__name__}: {e}")
                relations = [(float("inf"), float("inf"))]
            self._record("j1_helmholtz_relation", max(r[0] for r in relations), 100 * tol)
            self._record("j2_leray_relation", max(r[1] for r in relations), 100 * tol)

            if len(packs) >= 2:
                self._guarded("q_commutator_form", 10 * tol, lambda: self.commutator_form_of_q(packs))
            if grid.d == 1:
                self.one_dimensional_oracles(pack, config)

        report = VerifyReport(d=grid.d, side=grid.L, tolerance=tol, checks=list(self.results))
        logger.info(f"항등식 검사 완료: {len(report.checks)} 개 중 실패 {len(report.failures)} 개")
        return report

    def _vertical_derivatives(self, packs: Sequence[CorrectorPack], config: ExperimentConfig,
                              base: SeedSpec) -> float:
        worst = 0.0
        for p in range(config.verify.pairs):
            pack = packs[p % len(packs)]
            rng = generator_for(base.for_realization(p).with_purpose("verify_edge"))
            edge = (int(rng.integers(pack.grid.node_count)), int(rng.integers(pack.grid.d)))
            result = vertical_derivative_check(pack.a, edge, pack.seed, config.law, self.cfg, pack=pack)
            worst = max(worst, result.discrepancy / max(result.scale, 1.0))
        return worst


identity_verifier = IdentityVerifier()
