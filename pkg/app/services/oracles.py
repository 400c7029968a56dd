"""
1차원 닫힌 형태 해 (해석적 기준값)

d = 1 토러스에서는 발산 형태 방정식의 플럭스가 상수이므로 모든 양을 직접 쓸 수 있습니다.

- ā_L = (L^{-1} Σ 1/a)^{-1}  (조화평균)
- ∇φ + 1 = ā_L / a
- Ξ = (a - ā_ref) ā_L / a  (ā_ref = ā_L 이면 ā - ā²/a)
- -∇*·a∇u = ∇*·h  ⇒  a∇u + h = c,  c = Σ(h/a) / Σ(1/a)
- Q = ā⁴ Var(1/a),  E[ā_L] → 1/E[1/a]
- two_point 법칙의 유한 L 평균: E[ā_L] = Σ_k Bin(k; L, p) · L / (k/lo + (L-k)/hi)
"""
import logging
from typing import Tuple

import numpy as np
from scipy import stats

from app.models.lattice import EdgeField, NodeField
from app.models.law import ConductanceLaw
from app.settings import SRC_LOG_LEVELS

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["SERVICE"])


def _values_1d(a: EdgeField) -> np.ndarray:
    if a.grid.d != 1:
        raise ValueError(f"닫힌 형태 해는 d=1 에서만 정의됩니다 (현재 d={a.grid.d})")
    return np.asarray(a.values[:, 0], dtype=np.float64)


def harmonic_abar(a: EdgeField) -> float:
    return float(1.0 / np.mean(1.0 / _values_1d(a)))


def corrector_gradient(a: EdgeField) -> EdgeField:
    """∇φ (= ā_L/a - 1)"""
    values = harmonic_abar(a) / _values_1d(a) - 1.0
    return EdgeField(grid=a.grid, values=values[:, None])


def commutator_values(a: EdgeField, abar_ref: float = None) -> np.ndarray:
    """노드별 Ξ (ā_ref 생략 시 ā_L)"""
    values = _values_1d(a)
    abar = harmonic_abar(a)
    ref = abar if abar_ref is None else float(np.asarray(abar_ref).ravel()[0])
    return (values - ref) * abar / values


def divergence_form_solution(a: EdgeField, h: EdgeField) -> Tuple[NodeField, EdgeField]:
    """
    -∇*·a∇u = ∇*·h 의 평균 0 해와 그 기울기.

    Returns:
        (u, ∇u)
    """
    values = _values_1d(a)
    flux = np.asarray(h.values[:, 0], dtype=np.float64)
    c = np.sum(flux / values) / np.sum(1.0 / values)
    grad = (c - flux) / values
    u = np.concatenate([[0.0], np.cumsum(grad[:-1])])
    u -= u.mean()
    return NodeField(grid=a.grid, values=u), EdgeField(grid=a.grid, values=grad[:, None])


def _inverse_moments(law: ConductanceLaw) -> Tuple[float, float]:
    """(E[1/a], E[1/a²])"""
    if law.kind == "two_point":
        return (law.p / law.lo + (1 - law.p) / law.hi,
                law.p / law.lo ** 2 + (1 - law.p) / law.hi ** 2)
    if law.kind == "uniform":
        lam = law.lam
        if lam == 1.0:
            return 1.0, 1.0
        return -np.log(lam) / (1.0 - lam), 1.0 / lam
    dist = stats.beta(law.alpha, law.beta, loc=law.lam, scale=1.0 - law.lam)
    return float(dist.expect(lambda x: 1.0 / x)), float(dist.expect(lambda x: 1.0 / x ** 2))


def expected_abar(law: ConductanceLaw) -> float:
    """큰 L 극한의 ā = 1/E[1/a]"""
    return float(1.0 / _inverse_moments(law)[0])


def expected_abar_finite(law: ConductanceLaw, L: int) -> float:
    """
    한 변 L 토러스에서의 정확한 E[ā_L] (two_point 법칙).

    ā_L = L / Σ 1/a 이므로 낮은 값 lo 를 가진 변의 수 k ~ Bin(L, p) 에 대한 합입니다.

    Raises:
        ValueError: two_point 가 아닌 법칙, L < 1
    """
    if law.kind != "two_point":
        raise ValueError(f"유한 L 평균은 two_point 법칙에서만 닫힌 형태입니다 (현재 {law.kind})")
    if L < 1:
        raise ValueError(f"L 은 1 이상이어야 합니다: {L}")
    k = np.arange(L + 1)
    weights = stats.binom.pmf(k, L, law.p)
    return float(np.sum(weights * L / (k / law.lo + (L - k) / law.hi)))


def expected_q(law: ConductanceLaw) -> float:
    """Q = ā⁴ Var(1/a) (델타 방법)"""
    m1, m2 = _inverse_moments(law)
    abar = 1.0 / m1
    return float(abar ** 4 * (m2 - m1 ** 2))
