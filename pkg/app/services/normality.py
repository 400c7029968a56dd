"""
정규성 지표

표본을 표본 표준편차로 표준화한 뒤
- Kolmogorov 거리: 경험 CDF 와 표준정규 CDF 의 최대 차이
- Wasserstein-1 거리: 정렬된 표준화 표본과 정규 분위수 Φ^{-1}((k - 1/2)/n) 의 평균 절대 차이
를 구합니다. δ_N 추정은 두 거리의 합이며, 백분위 부트스트랩 신뢰구간을 함께 보고할 수 있습니다.
"""
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from app.models.law import SeedSpec
from app.models.stats import NormalityReport
from app.modules.random_fields import generator_for
from app.settings import SRC_LOG_LEVELS
from app.utils.exceptions import DegenerateSample, InsufficientSamples

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["SERVICE"])

MIN_SAMPLES = 100


def standardize(samples: Sequence[float]) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    std = x.std(ddof=1)
    if not std > 0.0:
        raise DegenerateSample("표본 분산이 0 입니다")
    return (x - x.mean()) / std


def _kolmogorov(z: np.ndarray) -> float:
    return float(stats.kstest(z, "norm").statistic)


def _wasserstein(z: np.ndarray) -> float:
    n = z.size
    quantiles = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return float(np.mean(np.abs(np.sort(z) - quantiles)))


def _distances(x: np.ndarray) -> Tuple[float, float]:
    std = x.std(ddof=1)
    if not std > 0.0:
        return float("nan"), float("nan")
    z = (x - x.mean()) / std
    return _kolmogorov(z), _wasserstein(z)


def normality_metrics(samples: Sequence[float]) -> Tuple[float, float]:
    """
    (Kolmogorov 거리, Wasserstein-1 거리)

    Raises:
        InsufficientSamples: 표본이 100 개 미만
        DegenerateSample: 표본 분산이 0
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < MIN_SAMPLES:
        raise InsufficientSamples(f"정규성 지표에는 표본이 {MIN_SAMPLES} 개 이상 필요합니다",
                                  required=MIN_SAMPLES, got=int(x.size))
    z = standardize(x)
    return _kolmogorov(z), _wasserstein(z)


def normality_report(samples: Sequence[float], bootstrap_resamples: int = 0,
                     seed: Optional[SeedSpec] = None, confidence: float = 0.95) -> NormalityReport:
    """
    정규성 지표와 (선택적으로) 백분위 부트스트랩 신뢰구간.

    Args:
        samples: 표본
        bootstrap_resamples: 0 이면 신뢰구간 생략
        seed: 부트스트랩 난수 스트림 (purpose "bootstrap")
        confidence: 신뢰수준
    """
    x = np.asarray(samples, dtype=np.float64)
    kolmogorov, wasserstein = normality_metrics(x)
    report = NormalityReport(n=int(x.size), kolmogorov=kolmogorov, wasserstein=wasserstein)
    if bootstrap_resamples <= 0:
        return report

    rng = generator_for((seed or SeedSpec(master_seed=0)).with_purpose("bootstrap"))

    def statistic(sample, axis=-1):
        k, w = _distances(np.asarray(sample))
        return np.array([k, w, k + w])

    result = stats.bootstrap((x,), statistic, n_resamples=bootstrap_resamples, vectorized=False,
                             paired=False, confidence_level=confidence, method="percentile",
                             random_state=rng)
    low, high = result.confidence_interval
    return report.model_copy(update={
        "kolmogorov_ci": (float(low[0]), float(high[0])),
        "wasserstein_ci": (float(low[1]), float(high[1])),
        "delta_ci": (float(low[2]), float(high[2])),
    })
