"""
실현 결과 캐시

(마스터 시드, 실현 인덱스, L, d, 법칙, 솔버 설정, 스터디별 추가 키) 의 내용 해시를 키로 실현 결과를
JSON 파일 하나씩 저장합니다. 같은 파라미터를 쓰는 스터디끼리 풀이를 공유하고, 중단된 스터디를
다시 실행하면 끝난 실현은 다시 풀지 않습니다. 실수는 repr 로 저장되므로 왕복 후에도 비트 단위로 같습니다.
"""
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from app.models.law import ConductanceLaw
from app.models.solver import SolveConfig, SolveRecord
from app.modules.worker_pool import RealizationOutcome
from app.settings import SRC_LOG_LEVELS

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["SERVICE"])


def cache_key(kind: str, master_seed: int, index: int, L: int, d: int, law: ConductanceLaw,
              solver: Optional[SolveConfig], **extra: Any) -> str:
    """결과 캐시 키 (정렬된 JSON 의 sha256)"""
    content = {
        "kind": kind,
        "master_seed": master_seed,
        "index": index,
        "L": L,
        "d": d,
        "law": law.model_dump(),
        "solver": (solver or SolveConfig()).model_dump(),
        "extra": extra,
    }
    text = json.dumps(content, sort_keys=True, default=_plain)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _plain(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if hasattr(obj, "model_dump"):
        return obj.model_dump()
    raise TypeError(f"직렬화할 수 없는 값: {type(obj).__name__}")


def _encode(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "shape": list(obj.shape)}
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _decode(obj: Any) -> Any:
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.array(obj["__array__"], dtype=np.float64).reshape(obj["shape"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


class ResultStore:
    """실현 결과 파일 캐시 (코디네이터만 씁니다)"""
    _directory: Optional[Path] = None
    _enabled: bool = False

    def initialize(self, directory: Union[str, Path], enabled: bool = True) -> None:
        """캐시 폴더를 준비합니다."""
        self._directory = Path(directory)
        self._enabled = enabled
        if enabled:
            self._directory.mkdir(parents=True, exist_ok=True)
            logger.debug(f"결과 캐시: {self._directory}")

    @property
    def enabled(self) -> bool:
        return self._enabled and self._directory is not None

    def _path(self, key: str) -> Path:
        return self._directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[RealizationOutcome]:
        """캐시된 실현 결과 (없거나 읽을 수 없으면 None)"""
        if not self.enabled:
            return None
        path = self._path(key)
        if not path.exists():
            return None
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
            return RealizationOutcome(
                index=data["index"],
                payload=_decode(data["payload"]),
                records=[SolveRecord(**r) for r in data["records"]],
                error=data.get("error"),
            )
        except Exception as e:
            logger.warning(f"캐시 항목 로드 실패 ({path.name}): {str(e)}")
            return None

    def put(self, key: str, outcome: RealizationOutcome) -> None:
        """결과를 저장합니다. 임시 파일에 쓴 뒤 이름을 바꿔 중단 시에도 반쯤 쓴 파일이 남지 않습니다."""
        if not self.enabled:
            return
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        data: Dict[str, Any] = {
            "index": outcome.index,
            "payload": _encode(outcome.payload),
            "records": [r.model_dump() for r in outcome.records],
            "error": outcome.error,
        }
        tmp = path.with_suffix(".tmp")
        try:
            with open(tmp, "w", encoding="utf-8") as f:
                json.dump(data, f, ensure_ascii=False, default=_plain)
            os.replace(tmp, path)
        except Exception as e:
            logger.error(f"캐시 저장 실패 ({path.name}): {str(e)}")


result_store = ResultStore()
