"""
요동 통계 모델 (테스트 함수, 범함수 표본, RVE / Green-Kubo 추정량, 정규성, 스케일링)
"""
from __future__ import annotations

import math
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator

from app.models.lattice import EdgeField, MatrixField, TorusGrid
from app.utils.exceptions import SupportOverflow

# 유효 지지 반경 = SUPPORT_RADIUS × width
SUPPORT_RADIUS = 4.0


def _as_list(arr):
    return None if arr is None else np.asarray(arr).tolist()


class TestFunction(BaseModel):
    """
    거시 좌표 [0, 1)^d 위의 매끄러운 테스트 함수. 격자 노드 x 에서 ε·x 로 샘플링합니다.

    - gaussian_bump: exp(-|y-c|²/(2w²)), 반경 4w 밖에서 0
    - tensor_bump:   exp(1 - 1/(1 - r²)), r = |y-c|/(4w) (C∞ 콤팩트 지지)
    - dipole:        가우시안의 첫 좌표 미분 -(y_1 - c_1)/w² · exp(-|y-c|²/(2w²)) (평균 0)

    amplitude 는 F 용 d×d 행렬 또는 f, g 용 d 벡터이며, 생략하면 e₁⊗e₁ / e₁ 입니다.
    """
    __test__ = False  # pytest 수집 대상 아님

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["gaussian_bump", "tensor_bump", "dipole"] = "gaussian_bump"
    center: Optional[Tuple[float, ...]] = None
    width: float = Field(0.125, gt=0.0)
    amplitude: Optional[Tuple] = None

    def center_for(self, d: int) -> np.ndarray:
        if self.center is None:
            return np.full(d, 0.5)
        c = np.asarray(self.center, dtype=np.float64)
        if c.shape != (d,):
            raise ValueError(f"중심 좌표 차원 {c.shape} 이 d={d} 와 다릅니다")
        return c

    def check_support(self, d: int) -> None:
        """
        Raises:
            SupportOverflow: 반경 4w 가 상자 절반을 넘거나 지지가 [0, 1]^d 를 벗어날 때
        """
        radius = SUPPORT_RADIUS * self.width
        if radius > 0.5:
            raise SupportOverflow(f"테스트 함수 지지 반경 {radius:g} 가 상자 절반(0.5)을 넘습니다")
        c = self.center_for(d)
        if np.any(c - radius < -1e-12) or np.any(c + radius > 1.0 + 1e-12):
            raise SupportOverflow(f"테스트 함수 지지 [{c - radius}, {c + radius}] 가 상자 [0, 1]^{d} 를 벗어납니다")

    def profile(self, points: np.ndarray) -> np.ndarray:
        """연속 좌표 (n, d) 에서의 스칼라 형상 함수 값"""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        diff = points - self.center_for(points.shape[1])
        r2 = np.sum(diff ** 2, axis=1)
        w = self.width
        inside = r2 < (SUPPORT_RADIUS * w) ** 2

        if self.kind == "tensor_bump":
            s2 = np.where(inside, r2 / (SUPPORT_RADIUS * w) ** 2, 0.0)
            return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - s2)), 0.0)

        gauss = np.where(inside, np.exp(-0.5 * r2 / w ** 2), 0.0)
        if self.kind == "dipole":
            return -diff[:, 0] / w ** 2 * gauss
        return gauss

    def _amplitude(self, shape: Tuple[int, ...]) -> np.ndarray:
        if self.amplitude is None:
            amp = np.zeros(shape)
            amp[(0,) * len(shape)] = 1.0
            return amp
        amp = np.asarray(self.amplitude, dtype=np.float64)
        if amp.shape != shape:
            raise ValueError(f"amplitude 크기 {amp.shape} 가 {shape} 와 다릅니다")
        return amp

    def nodal_profile(self, grid: TorusGrid, box: int = 1) -> np.ndarray:
        """
        ε = box/L 로 노드 x 에서 profile 을 계산합니다.

        거시 상자는 [0, box)^d 이고 단위 상자 [0, 1)^d 가 그 가운데에 놓입니다 (box = 1 이면 εx 그대로).
        """
        self.check_support(grid.d)
        return self.profile(grid.coordinates() / grid.L * box - 0.5 * (box - 1))

    def tensor_field(self, grid: TorusGrid, box: int = 1) -> MatrixField:
        """F(εx) = profile(εx) · A"""
        amp = self._amplitude((grid.d, grid.d))
        return MatrixField(grid=grid, values=self.nodal_profile(grid, box)[:, None, None] * amp)

    def vector_field(self, grid: TorusGrid, box: int = 1) -> EdgeField:
        """f(εx) = profile(εx) · v"""
        amp = self._amplitude((grid.d,))
        return EdgeField(grid=grid, values=self.nodal_profile(grid, box)[:, None] * amp)


class FunctionalSample(BaseModel):
    """실현 하나에서 얻은 범함수 값 (이름 → 값)"""
    realization: int
    epsilon: float
    values: Dict[str, float]

    @field_validator("values")
    @classmethod
    def _finite(cls, v: Dict[str, float]):
        bad = [k for k, x in v.items() if not math.isfinite(x)]
        if bad:
            raise ValueError(f"유한하지 않은 범함수 값: {bad}")
        return v


class SolutionFunctionals(BaseModel):
    """
    해 기반 범함수의 중심화 전 값 (격자 단위).

    - i1_raw = ε^{d/2-1} Σ g_ε·∇U
    - i2_raw = ε^{d/2-1} Σ g_ε·a∇U
    - e0_flux_raw = ε^{d/2-1} Σ g_ε·(a - ā)∇U   (호출자가 표본 평균으로 중심화)
    - e0_xi = ε^{d/2-1} Σ g_ε·Ξ_i ∇_iŪ
    - pathwise_lhs = Σ εg_ε·∇(U - Ũ), pathwise_rhs = Σ ∇V·(a - ā)∇U
    - pathwise_scale = max(|lhs|, |rhs|), pathwise_noise = 각 합의 절댓값 항 합에 비례하는 반올림 한계
    """
    i1_raw: float
    i2_raw: float
    e0_flux_raw: float
    e0_xi: float
    pathwise_lhs: float
    pathwise_rhs: float
    pathwise_scale: float = 0.0
    pathwise_noise: float = 0.0

    @property
    def pathwise_discrepancy(self) -> float:
        """
        양변의 상대 차이 |lhs - rhs| / max(|lhs|, |rhs|).

        차이가 합을 이루는 항들의 반올림 수준 (pathwise_noise) 이하이면 0 입니다.
        """
        gap = abs(self.pathwise_lhs - self.pathwise_rhs)
        if gap <= self.pathwise_noise:
            return 0.0
        return gap / max(self.pathwise_scale, np.finfo(np.float64).tiny)


class RveEstimate(BaseModel):
    """N 개 실현에 대한 ā_{L,N}, Q_{L,N} 과 표준오차"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    d: int
    L: int
    N: int = Field(..., ge=2)
    abar: np.ndarray
    abar_se: np.ndarray
    Q: np.ndarray
    Q_se: np.ndarray
    master_seed: int
    realizations: List[int] = []
    failed: List[int] = []

    @field_serializer("abar", "abar_se", "Q", "Q_se")
    def _serialize(self, arr: np.ndarray):
        return _as_list(arr)

    def q_component(self, i: int, j: int, k: int, l: int) -> Tuple[float, float]:
        return float(self.Q[i, j, k, l]), float(self.Q_se[i, j, k, l])


class GreenKuboEstimate(BaseModel):
    """창 함수 Green-Kubo 추정값 (d⁴ 텐서)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    d: int
    L: int
    realizations: int
    Q: np.ndarray
    Q_se: np.ndarray

    @field_serializer("Q", "Q_se")
    def _serialize(self, arr: np.ndarray):
        return _as_list(arr)


class NormalityReport(BaseModel):
    """표준화된 표본의 정규분포까지 경험적 거리"""
    n: int
    kolmogorov: float
    wasserstein: float
    kolmogorov_ci: Optional[Tuple[float, float]] = None
    wasserstein_ci: Optional[Tuple[float, float]] = None
    delta_ci: Optional[Tuple[float, float]] = None

    @property
    def delta(self) -> float:
        """δ_N 추정 = W1 + Kolmogorov"""
        return self.wasserstein + self.kolmogorov


class RateCorrection(BaseModel):
    """
    피팅 전에 나눠 줄 로그 보정.

    - none
    - mu_d: μ_d(x)^power (d=1: x, d=2: log(2+x), d>2: 1)
    - log_power: log(2+x)^power

    inverse=True 이면 x 대신 1/x 에서 계산합니다 (파라미터가 ε 일 때 μ_d(1/ε)).
    """
    kind: Literal["none", "mu_d", "log_power"] = "none"
    d: int = 2
    power: float = 1.0
    inverse: bool = False

    def factor(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.inverse:
            x = 1.0 / x
        if self.kind == "none":
            return np.ones_like(x)
        if self.kind == "log_power":
            return np.log(2.0 + x) ** self.power
        return mu_d(x, self.d) ** self.power


def mu_d(r, d: int):
    """μ_d(r) = r (d=1), log(2+r) (d=2), 1 (d>2)"""
    r = np.asarray(r, dtype=np.float64)
    if d == 1:
        return r
    if d == 2:
        return np.log(2.0 + r)
    return np.ones_like(r)


class StudyPoint(BaseModel):
    parameter: float
    statistic: float
    error: float = 0.0


class ScalingFit(BaseModel):
    """log-log 가중 최소제곱 결과"""
    slope: float
    intercept: float
    slope_se: float
    confidence: Tuple[float, float]
    correction: RateCorrection = RateCorrection()
    points: int


class StudyResult(BaseModel):
    """스터디 한 번의 (파라미터, 통계량, 몬테카를로 오차) 기록과 피팅 결과"""
    kind: str
    points: List[StudyPoint] = []
    fit: Optional[ScalingFit] = None
    extras: Dict = {}
