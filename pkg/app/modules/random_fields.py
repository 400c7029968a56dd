"""
독립 동분포 전도도 필드 표본 추출과 단일 변 재표본(수직 섭동 a → a^b)

스트림은 (master_seed, realization_index, purpose[, 변 인덱스]) 로부터 SeedSequence 를 만들고
카운터 기반 Philox 생성기로 뽑습니다. 따라서 실현 n 의 변 (z, i) 값은 반복 순서나
병렬 스케줄과 무관한 순수 함수입니다.
"""
import hashlib
import logging
from typing import Tuple

import numpy as np

from app.models.law import ConductanceLaw, EdgePerturbation, SeedSpec
from app.models.lattice import EdgeField, TorusGrid
from app.settings import SRC_LOG_LEVELS

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["MODULE"])


def _purpose_code(purpose: str) -> int:
    # hash() 는 프로세스마다 달라지므로 sha256 앞 8바이트 사용
    return int.from_bytes(hashlib.sha256(purpose.encode("utf-8")).digest()[:8], "little")


def generator_for(seed: SeedSpec, *extra: int) -> np.random.Generator:
    """시드 명세에 대응하는 독립 난수 생성기"""
    sequence = np.random.SeedSequence(
        entropy=seed.master_seed,
        spawn_key=(seed.realization_index, _purpose_code(seed.purpose), *extra),
    )
    return np.random.Generator(np.random.Philox(sequence))


def draw(law: ConductanceLaw, rng: np.random.Generator, size) -> np.ndarray:
    """법칙에서 size 개를 뽑습니다."""
    if law.kind == "two_point":
        u = rng.random(size)
        return np.where(u < law.p, law.lo, law.hi)
    if law.kind == "uniform":
        return law.lam + (1.0 - law.lam) * rng.random(size)
    return law.lam + (1.0 - law.lam) * rng.beta(law.alpha, law.beta, size)


def sample_field(grid: TorusGrid, law: ConductanceLaw, seed: SeedSpec) -> EdgeField:
    """토러스 위 iid 전도도 필드 (주기화된 법칙의 실현)"""
    rng = generator_for(seed)
    values = draw(law, rng, (grid.node_count, grid.d))
    return EdgeField(grid=grid, values=values)


def resample_edge(a: EdgeField, edge: Tuple[int, int], seed: SeedSpec,
                  law: ConductanceLaw) -> Tuple[EdgeField, EdgePerturbation]:
    """
    변 b = (z_b, e_b) 의 값만 같은 법칙에서 독립적으로 다시 뽑은 a^b 를 반환합니다.

    Args:
        a: 원래 전도도 필드
        edge: (노드 인덱스 z_b, 방향 e_b)
        seed: 실현 시드 (재표본 스트림은 purpose "resample" 과 변 인덱스로 분리됨)
        law: a 를 뽑은 법칙

    Returns:
        (a^b, EdgePerturbation)
    """
    node, direction = int(edge[0]), int(edge[1])
    grid = a.grid
    if not (0 <= node < grid.node_count and 0 <= direction < grid.d):
        raise ValueError(f"격자에 없는 변: {edge}")

    rng = generator_for(seed.with_purpose("resample"), node * grid.d + direction)
    new_value = float(draw(law, rng, 1)[0])

    values = np.array(a.values)
    old_value = float(values[node, direction])
    values[node, direction] = new_value
    perturbation = EdgePerturbation(node=node, direction=direction,
                                    old_value=old_value, new_value=new_value)
    return EdgeField(grid=grid, values=values), perturbation


def perturbation_field(grid: TorusGrid, perturbation: EdgePerturbation) -> EdgeField:
    """Δ_b a = a - a^b: 변 (z_b, e_b) 에서만 0 이 아님"""
    values = np.zeros((grid.node_count, grid.d))
    values[perturbation.node, perturbation.direction] = perturbation.delta
    return EdgeField(grid=grid, values=values)
