"""
RVE (대표 체적 요소) 추정 서비스

N 개의 독립 실현에서
  ā_{L,N} = N^{-1} Σ ā_L^{(n)}
  Q_{L,N} = L^d/(N-1) Σ (ā_L^{(n)} - ā_{L,N})ᵀ ⊗ (ā_L^{(n)} - ā_{L,N})ᵀ
를 구하고 실현 단위 잭나이프로 표준오차를 붙입니다.
"""
import logging
import math
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.models.lattice import TorusGrid
from app.models.law import ConductanceLaw, SeedSpec
from app.models.solver import SolveConfig
from app.models.stats import RveEstimate
from app.modules.random_fields import sample_field
from app.modules.worker_pool import RealizationOutcome, run_realizations
from app.services.correctors import build_pack
from app.settings import SRC_LOG_LEVELS
from app.utils.exceptions import InsufficientSamples

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["SERVICE"])


def abar_task(L: int, d: int, law: ConductanceLaw, master_seed: int, cfg: Optional[SolveConfig],
              index: int, purpose: str = "field") -> RealizationOutcome:
    """
    실현 index 의 ā_L 과 ⨍(∇φ_i + e_i) (작업자에서 실행).

    두 번째 값이 있으면 임의의 ā_ref 에 대한 ⨍Ξ 를 다시 풀지 않고 구할 수 있습니다.
    """
    seed = SeedSpec(master_seed=master_seed, realization_index=index, purpose=purpose)
    a = sample_field(TorusGrid(d=d, L=L), law, seed)
    pack = build_pack(a, cfg, with_flux_corrector=False, seed=seed)
    mean_gradient = np.stack([pack.corrector_gradient(i).mean() for i in range(d)], axis=1)
    payload = {"abar": np.array(pack.abar), "mean_gradient": mean_gradient}
    return RealizationOutcome(index=index, payload=payload, records=pack.reports)


def commutator_means(abars: np.ndarray, mean_gradients: np.ndarray, abar_ref: np.ndarray) -> np.ndarray:
    """⨍Ξ^{(n)}[i, j] = (ā_L^{(n)} - ā_ref M^{(n)})[j, i],  M 의 열 i = ⨍(∇φ_i + e_i)"""
    return np.transpose(abars - np.einsum("jk,nki->nji", abar_ref, mean_gradients), (0, 2, 1))


def _sample_mean(abars: np.ndarray) -> np.ndarray:
    # 모든 실현이 같으면 반올림 없이 그 값을 평균으로 (퇴화 법칙에서 Q = 0 정확히)
    if np.all(abars == abars[0]):
        return np.array(abars[0])
    return abars.mean(axis=0)


def _deviations(abars: np.ndarray) -> np.ndarray:
    # δ_n = (ā_L^{(n)} - ā_{L,N})ᵀ
    return np.transpose(abars - _sample_mean(abars), (0, 2, 1))


def _symmetrize(Q: np.ndarray) -> np.ndarray:
    return 0.5 * (Q + Q.transpose(2, 3, 0, 1))


def fluctuation_tensor(abars: np.ndarray, L: int) -> np.ndarray:
    """Q_{L,N} (쌍 교환 (ij)↔(kl) 에 대해 정확히 대칭)"""
    abars = np.asarray(abars, dtype=np.float64)
    N, d = abars.shape[0], abars.shape[1]
    if N < 2:
        raise InsufficientSamples("Q_{L,N} 에는 실현이 2 개 이상 필요합니다", required=2, got=N)
    delta = _deviations(abars)
    S = np.einsum("nij,nkl->ijkl", delta, delta)
    return _symmetrize(float(L) ** d * S / (N - 1))


def rve_statistics(abars: np.ndarray, L: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    (ā_{L,N}, SE(ā), Q_{L,N}, SE(Q)).

    SE(ā) 는 표본 표준편차/√N (평균의 잭나이프와 같음), SE(Q) 는 닫힌 형태의 leave-one-out
    S_{-n} = S - N/(N-1) δ_n⊗δ_n, Q_{-n} = L^d S_{-n}/(N-2) 로 계산합니다. N < 3 이면 NaN.
    """
    abars = np.asarray(abars, dtype=np.float64)
    N, d = abars.shape[0], abars.shape[1]
    Q = fluctuation_tensor(abars, L)
    mean = _sample_mean(abars)
    if N < 3:
        nan = np.full((d,) * 4, np.nan)
        return mean, np.full((d, d), np.nan), Q, nan

    abar_se = abars.std(axis=0, ddof=1) / math.sqrt(N)

    delta = _deviations(abars)
    S = np.einsum("nij,nkl->ijkl", delta, delta)
    outer = np.einsum("nij,nkl->nijkl", delta, delta)
    Q_loo = float(L) ** d * (S[None] - N / (N - 1.0) * outer) / (N - 2.0)
    Q_loo = 0.5 * (Q_loo + Q_loo.transpose(0, 3, 4, 1, 2))
    Q_se = np.sqrt((N - 1.0) / N * np.sum((Q_loo - Q_loo.mean(axis=0)) ** 2, axis=0))
    return mean, abar_se, Q, Q_se


def estimate_from_abars(abars: np.ndarray, L: int, master_seed: int,
                        realizations: Optional[List[int]] = None,
                        failed: Optional[List[int]] = None) -> RveEstimate:
    abars = np.asarray(abars, dtype=np.float64)
    N, d = abars.shape[0], abars.shape[1]
    if N < 2:
        raise InsufficientSamples(f"성공한 실현이 {N} 개뿐입니다", required=2, got=N)
    mean, abar_se, Q, Q_se = rve_statistics(abars, L)
    return RveEstimate(d=d, L=L, N=N, abar=mean, abar_se=abar_se, Q=Q, Q_se=Q_se,
                       master_seed=master_seed,
                       realizations=list(realizations) if realizations is not None else list(range(N)),
                       failed=list(failed or []))


def rve_estimate(L: int, N: int, law: ConductanceLaw, master_seed: int,
                 cfg: Optional[SolveConfig] = None, d: int = 2, workers: int = 1,
                 purpose: str = "field", outcomes: Optional[List[RealizationOutcome]] = None) -> RveEstimate:
    """
    N 개 독립 교정자 파이프라인으로 RVE 추정량을 구합니다.

    미수렴 실현은 제외되고 실제로 사용된 N 이 보고됩니다.

    Args:
        L: 토러스 한 변
        N: 실현 수 (≥ 2)
        law: 전도도 법칙
        master_seed: 마스터 시드
        cfg: 솔버 설정
        d: 차원
        workers: 작업자 수
        purpose: 난수 스트림 용도 (파일럿 실행은 별도 용도 사용)
        outcomes: 이미 계산된 실현 결과 (캐시 재사용)

    Raises:
        InsufficientSamples: N < 2 이거나 성공한 실현이 2 개 미만일 때
    """
    if N < 2:
        raise InsufficientSamples("RVE 추정에는 N ≥ 2 가 필요합니다", required=2, got=N)
    if outcomes is None:
        task = partial(abar_task, L, d, law, master_seed, cfg, purpose=purpose)
        outcomes = run_realizations(task, range(N), workers)

    good = [o for o in outcomes if o.ok]
    failed = [o.index for o in outcomes if not o.ok]
    if failed:
        logger.warning(f"RVE L={L}: 실현 {len(failed)} 개 실패, {len(good)} 개로 추정")
    abars = np.stack([o.payload["abar"] for o in good]) if good else np.zeros((0, d, d))
    estimate = estimate_from_abars(abars, L, master_seed, [o.index for o in good], failed)
    logger.info(f"RVE L={L}, N={estimate.N}: ā_11={estimate.abar[0, 0]:.6f} ± {estimate.abar_se[0, 0]:.2e}, "
                f"Q_1111={estimate.Q[0, 0, 0, 0]:.6f} ± {estimate.Q_se[0, 0, 0, 0]:.2e}")
    return estimate


def rve_q_from_commutators(xi_means: np.ndarray, L: int) -> np.ndarray:
    """
    공간 평균 Ξ 로 쓴 Q_{L,N}: L^d/(N-1) Σ_n (⨍Ξ^{(n)})⊗(⨍Ξ^{(n)}).

    ā_ref = ā_{L,N} 로 계산한 Ξ 를 넣으면 ⨍Ξ^{(n)} = (ā_L^{(n)} - ā_{L,N})ᵀ 이므로 직접 공식과 같습니다.
    """
    xi_means = np.asarray(xi_means, dtype=np.float64)
    N, d = xi_means.shape[0], xi_means.shape[1]
    if N < 2:
        raise InsufficientSamples("실현이 2 개 이상 필요합니다", required=2, got=N)
    S = np.einsum("nij,nkl->ijkl", xi_means, xi_means)
    return _symmetrize(float(L) ** d * S / (N - 1))


def nested_prefix_estimates(abars: np.ndarray, L: int, sizes: Sequence[int]) -> Dict[int, Tuple[float, float]]:
    """
    실현 목록의 앞부분 N 개씩으로 Q_1111 과 잭나이프 표준오차를 구합니다 (N^{-1/2} 법칙 확인용).
    """
    abars = np.asarray(abars, dtype=np.float64)
    out = {}
    for n in sorted(set(int(s) for s in sizes)):
        if n > abars.shape[0]:
            logger.warning(f"요청한 N={n} 이 실현 수 {abars.shape[0]} 보다 큽니다")
            continue
        _, _, Q, Q_se = rve_statistics(abars[:n], L)
        out[n] = (float(Q[0, 0, 0, 0]), float(Q_se[0, 0, 0, 0]))
    return out


def systematic_error_report(estimates: Sequence[RveEstimate],
                            component: Tuple[int, int, int, int] = (0, 0, 0, 0)) -> List[Dict]:
    """
    |Q_L - Q_{2L}| 의 감소를 log^{d/2}L 로 나눠 보고합니다.

    몬테카를로 오차 (두 표준오차의 결합) 가 측정된 차이의 절반을 넘으면 swamped=True.
    """
    by_side = {e.L: e for e in estimates}
    rows = []
    for L in sorted(by_side):
        if 2 * L not in by_side:
            continue
        small, large = by_side[L], by_side[2 * L]
        diff = abs(float(small.Q[component]) - float(large.Q[component]))
        error = math.hypot(float(small.Q_se[component]), float(large.Q_se[component]))
        corrected = diff / math.log(L) ** (small.d / 2.0)
        rows.append({
            "L": L,
            "difference": diff,
            "error": error,
            "corrected": corrected,
            "swamped": bool(not (error < 0.5 * diff)),
        })
    for prev, cur in zip(rows, rows[1:]):
        cur["ratio"] = cur["corrected"] / prev["corrected"] if prev["corrected"] > 0 else float("nan")
    return rows
