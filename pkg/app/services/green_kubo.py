"""
Green-Kubo 창 함수 추정

Q_ijkl ≈ Σ_{x ∈ Q_2L} w_L(x) Cov(Ξ_ij(x), Ξ_kl(0)),  w_L(x) = Π_c max(0, 1 - |x_c|/L)

공분산은 실현별로 토러스 전체에서 기준점을 평균한 FFT 상호상관으로 구하고, 전역 평균
(실현 × 공간) 으로 중심화한 뒤 R/(R-1) 을 곱합니다. 실현별 창 합을 따로 보관하므로
큰 Ξ 필드를 모아 두지 않고도 작업자에서 계산한 모멘트만으로 결합할 수 있습니다.
"""
import logging
import math
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np

from app.models.corrector import CommutatorField
from app.models.lattice import TorusGrid
from app.models.stats import GreenKuboEstimate
from app.settings import SRC_LOG_LEVELS
from app.utils.exceptions import InsufficientSamples

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["SERVICE"])


@lru_cache(maxsize=16)
def window_weights(grid: TorusGrid, L: int) -> np.ndarray:
    """변위 x ∈ [-L, L)^d 에 대한 겹침 가중치 |Q_L ∩ (x + Q_L)| / |Q_L| (격자 형태)"""
    if grid.L != 2 * L:
        raise ValueError(f"창 함수는 한 변 2L={2 * L} 토러스에서 정의됩니다 (현재 {grid.L})")
    k = np.arange(grid.L)
    displacement = np.where(k < L, k, k - grid.L)
    hat = np.maximum(0.0, 1.0 - np.abs(displacement) / L)
    weights = hat
    for _ in range(grid.d - 1):
        weights = np.multiply.outer(weights, hat)
    weights = np.array(weights)
    weights.setflags(write=False)
    return weights


def realization_moments(xi: CommutatorField, L: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    실현 하나의 (창 가중 상호상관 합 W[(ij),(kl)], 공간 평균 μ[(ij)]).

    W = Σ_x w(x) |T|^{-1} Σ_y Ξ_ij(y + x) Ξ_kl(y)
    """
    grid = xi.grid
    d = grid.d
    weights = window_weights(grid, L)
    m = d * d
    fields = xi.xi.values.reshape(grid.node_count, m).T.reshape((m,) + grid.shape)
    axes = tuple(range(1, d + 1))
    spectra = np.fft.fftn(fields, axes=axes)

    W = np.zeros((m, m))
    for p in range(m):
        # Σ_y A(y + x) B(y) = ifft(Â · conj(B̂))
        cross = np.real(np.fft.ifftn(spectra[p][None] * np.conj(spectra), axes=axes)) / grid.node_count
        W[p] = np.sum(cross * weights, axis=axes)
    return W, fields.reshape(m, -1).mean(axis=1)


def combine_moments(moments: Sequence[Tuple[np.ndarray, np.ndarray]], grid: TorusGrid, L: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    실현별 모멘트를 전역 평균 중심화로 결합해 (Q, SE) 를 d⁴ 텐서로 돌려줍니다.

    Raises:
        InsufficientSamples: 실현이 2 개 미만
    """
    R = len(moments)
    if R < 2:
        raise InsufficientSamples("Green-Kubo 추정에는 실현이 2 개 이상 필요합니다", required=2, got=R)
    d = grid.d
    total_weight = float(np.sum(window_weights(grid, L)))
    W = np.stack([mo[0] for mo in moments])
    mu = np.stack([mo[1] for mo in moments])
    m_glob = mu.mean(axis=0)

    # Σ_x w(x)[|T|^{-1}Σ_y (A(y+x) - m_A)(B(y) - m_B)] = W - w_tot (m_B μ_A + m_A μ_B - m_A m_B)
    centered = W - total_weight * (
        mu[:, :, None] * m_glob[None, None, :]
        + m_glob[None, :, None] * mu[:, None, :]
        - np.outer(m_glob, m_glob)[None]
    )
    factor = R / (R - 1.0)
    Q = factor * centered.mean(axis=0)
    Q_se = factor * centered.std(axis=0, ddof=1) / math.sqrt(R)
    Q = 0.5 * (Q + Q.T)
    return Q.reshape((d,) * 4), Q_se.reshape((d,) * 4)


def green_kubo_window(realizations: Sequence[CommutatorField], L: int) -> GreenKuboEstimate:
    """
    Q_{2L} 토러스 위 Ξ 실현들로부터 창 함수 Green-Kubo 추정값.

    Args:
        realizations: 같은 ā_ref 로 계산한 Ξ 목록 (한 변 2L)
        L: 창 크기

    Raises:
        InsufficientSamples: 실현이 2 개 미만
    """
    realizations = list(realizations)
    if len(realizations) < 2:
        raise InsufficientSamples("Green-Kubo 추정에는 실현이 2 개 이상 필요합니다",
                                  required=2, got=len(realizations))
    grid = realizations[0].grid
    refs = {tuple(np.asarray(x.abar_ref).ravel()) for x in realizations}
    if len(refs) > 1:
        logger.warning("실현마다 ā_ref 가 다릅니다. Green-Kubo 추정은 고정된 ā_ref 를 가정합니다")
    moments = [realization_moments(x, L) for x in realizations]
    Q, Q_se = combine_moments(moments, grid, L)
    return GreenKuboEstimate(d=grid.d, L=L, realizations=len(moments), Q=Q, Q_se=Q_se)


def estimate_from_moments(moments: List[Tuple[np.ndarray, np.ndarray]], grid: TorusGrid, L: int) -> GreenKuboEstimate:
    Q, Q_se = combine_moments(moments, grid, L)
    return GreenKuboEstimate(d=grid.d, L=L, realizations=len(moments), Q=Q, Q_se=Q_se)
