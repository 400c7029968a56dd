"""
실현 단위 병렬 실행

실현 인덱스를 순서가 유지되는 청크로 나눠 joblib 작업자에게 분배합니다. 작업자는 상태가
없고, 결과는 항상 인덱스 순서로 돌아오므로 작업자 수와 무관하게 집계 결과가 같습니다.
"""
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence

from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict

from app.models.solver import SolveRecord
from app.settings import SRC_LOG_LEVELS
from app.utils.exceptions import HomogenizationError

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["MODULE"])


class RealizationOutcome(BaseModel):
    """실현 하나의 결과 또는 실패 정보"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    index: int
    payload: Any = None
    records: List[SolveRecord] = []
    error: Optional[Dict[str, Any]] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_one(task: Callable[[int], RealizationOutcome], index: int) -> RealizationOutcome:
    try:
        return task(index)
    except HomogenizationError as e:
        detail = {"message": str(e)}
        for attr in ("residual", "iterations"):
            if hasattr(e, attr):
                detail[attr] = getattr(e, attr)
        return RealizationOutcome(index=index, error={"type": type(e).__name__, **detail})


def _run_chunk(task: Callable[[int], RealizationOutcome], chunk: Sequence[int]) -> List[RealizationOutcome]:
    return [_run_one(task, i) for i in chunk]


def chunked(indices: Sequence[int], workers: int) -> List[List[int]]:
    """작업자당 여러 청크가 돌도록 나눔 (순서 유지)"""
    indices = list(indices)
    if not indices:
        return []
    size = max(1, len(indices) // max(1, 4 * workers))
    return [indices[i:i + size] for i in range(0, len(indices), size)]


def run_realizations(task: Callable[[int], RealizationOutcome], indices: Sequence[int],
                     workers: int = 1) -> List[RealizationOutcome]:
    """
    task(index) 를 모든 인덱스에 대해 실행하고 인덱스 순서의 결과 목록을 돌려줍니다.

    task 는 피클 가능해야 합니다 (모듈 수준 함수 또는 functools.partial).
    도메인 예외는 실현 단위 실패로 기록되고 나머지 실현은 계속 실행됩니다.

    Args:
        task: 실현 인덱스 → RealizationOutcome
        indices: 실현 인덱스 목록
        workers: 작업자 수 (1 이면 현재 프로세스에서 순차 실행)
    """
    indices = list(indices)
    if workers <= 1 or len(indices) <= 1:
        return _run_chunk(task, indices)

    chunks = chunked(indices, workers)
    logger.debug(f"병렬 실행: 실현 {len(indices)} 개, 작업자 {workers}, 청크 {len(chunks)}")
    results = Parallel(n_jobs=workers)(delayed(_run_chunk)(task, chunk) for chunk in chunks)
    return [outcome for chunk_result in results for outcome in chunk_result]
