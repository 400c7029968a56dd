"""
스케일링 법칙 피팅

log y = intercept + slope · log x 를 가중 최소제곱으로 맞춥니다. 로그 보정 (μ_d, log 거듭제곱)
은 피팅 전에 y 에서 나눠 줍니다. 오차가 주어지면 로그 좌표에서의 표준편차는 error / statistic 입니다.
"""
import logging
import warnings
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats
from scipy.optimize import OptimizeWarning, curve_fit

from app.models.stats import RateCorrection, ScalingFit, StudyPoint
from app.settings import SRC_LOG_LEVELS
from app.utils.exceptions import InsufficientPoints

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["SERVICE"])

PointLike = Union[StudyPoint, Tuple[float, float], Tuple[float, float, float]]


def _line(x, intercept, slope):
    return intercept + slope * x


def _linear_covariance(x: np.ndarray, y: np.ndarray, sigma: Optional[np.ndarray], params,
                       absolute: bool) -> np.ndarray:
    """(절편, 기울기) 의 가중 최소제곱 공분산 (XᵀWX)⁻¹, absolute=False 이면 잔차 분산을 곱함"""
    w = np.ones_like(x) if sigma is None else 1.0 / sigma ** 2
    X = np.column_stack([np.ones_like(x), x])
    cov = np.linalg.inv(X.T @ (w[:, None] * X))
    if not absolute:
        residual = y - X @ np.asarray(params)
        cov = cov * float(np.sum(w * residual ** 2)) / max(x.size - 2, 1)
    return cov


def _as_point(p: PointLike) -> StudyPoint:
    if isinstance(p, StudyPoint):
        return p
    return StudyPoint(parameter=p[0], statistic=p[1], error=p[2] if len(p) > 2 else 0.0)


def scaling_fit(points: Sequence[PointLike], correction: Optional[RateCorrection] = None,
                confidence: float = 0.95) -> ScalingFit:
    """
    log-log 기울기와 절편, 기울기 신뢰구간.

    Args:
        points: (parameter, statistic, error) 목록
        correction: 피팅 전에 나눠 줄 보정 (기본 없음)
        confidence: 신뢰구간 수준 (t 분포, 자유도 n-2)

    Raises:
        InsufficientPoints: 점이 3 개 미만
        ValueError: 파라미터나 통계량이 양수가 아닐 때
    """
    correction = correction or RateCorrection()
    pts = [_as_point(p) for p in points]
    if len(pts) < 3:
        raise InsufficientPoints(f"스케일링 피팅에는 점이 3 개 이상 필요합니다 (현재 {len(pts)})")

    x = np.array([p.parameter for p in pts], dtype=np.float64)
    factor = correction.factor(x)
    y = np.array([p.statistic for p in pts], dtype=np.float64) / factor
    err = np.array([p.error for p in pts], dtype=np.float64) / factor
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log 피팅에는 양의 파라미터와 통계량이 필요합니다")

    log_x, log_y = np.log(x), np.log(y)
    weighted = bool(np.all(err > 0))
    sigma = err / y if weighted else None

    slope0, intercept0 = np.polyfit(log_x, log_y, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        params, cov = curve_fit(_line, log_x, log_y, p0=[intercept0, slope0],
                                sigma=sigma, absolute_sigma=weighted)
    intercept, slope = float(params[0]), float(params[1])
    if not np.all(np.isfinite(cov)):
        # 잔차가 0 인 완전한 직선에서 curve_fit 은 공분산을 inf 로 채움
        cov = _linear_covariance(log_x, log_y, sigma, params, absolute=weighted)
    slope_se = float(np.sqrt(max(cov[1, 1], 0.0)))

    t = float(stats.t.ppf(0.5 + confidence / 2.0, df=max(len(pts) - 2, 1)))
    fit = ScalingFit(slope=slope, intercept=intercept, slope_se=slope_se,
                     confidence=(slope - t * slope_se, slope + t * slope_se),
                     correction=correction, points=len(pts))
    logger.info(f"스케일링 피팅 ({correction.kind}): 기울기 {slope:.4f} ± {slope_se:.2e}, 점 {len(pts)} 개")
    return fit
