"""
스터디 실행 기록 (JSONL)

- run.log: 풀이 한 번당 JSON 레코드 한 줄 (실현, 파라미터, 용도, 백엔드, 반복 횟수, 잔차)
- errors.jsonl: 실패한 실현마다 한 줄

레코드에는 시각 정보를 넣지 않으므로 같은 설정이면 바이트 단위로 같은 파일이 만들어집니다.
코디네이터만 기록하며, 실현 인덱스 순서로 씁니다.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from app.models.solver import SolveRecord, SolveReport
from app.settings import SRC_LOG_LEVELS

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["MODULE"])


def _dumps(record: Dict[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True, default=str)


class RunLogger:
    def __init__(self, directory: Union[str, Path], run_log: str = "run.log", error_log: str = "errors.jsonl"):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.run_path = self.directory / run_log
        self.error_path = self.directory / error_log
        # 재실행 시 이전 기록을 덮어씀
        self.run_path.write_text("", encoding="utf-8")
        self.error_path.write_text("", encoding="utf-8")
        self.solve_count = 0
        self.error_count = 0

    def log_solve(self, realization: int, parameter: Any, purpose: str, report: SolveReport) -> None:
        """
        풀이 보고서 한 건을 run.log 에 기록합니다.

        Args:
            realization: 실현 인덱스
            parameter: 스윕 파라미터 값 (L 또는 1/ε)
            purpose: 풀이 용도 (예: "corrector_0", "flux_corrector_0_0_1")
            report: 솔버 보고서
        """
        record = {
            "realization": realization,
            "parameter": parameter,
            "purpose": purpose,
            **report.model_dump(),
        }
        try:
            with open(self.run_path, "a", encoding="utf-8") as f:
                f.write(_dumps(record) + "\n")
            self.solve_count += 1
        except Exception as e:
            logger.error(f"run.log 쓰기 오류: {str(e)}")

    def log_solves(self, realization: int, parameter: Any, records: Iterable[SolveRecord]) -> None:
        """SolveRecord 목록을 순서대로 기록"""
        for record in records:
            self.log_solve(realization, parameter, record.purpose, record)

    def log_error(self, error_type: str, details: Dict[str, Any], realization: Optional[int] = None) -> None:
        """
        실현 단위 실패를 기록합니다.

        Args:
            error_type: 예외 클래스 이름
            details: 오류 관련 세부 정보
            realization: 실패한 실현 인덱스
        """
        record = {"error_type": error_type, "realization": realization, "details": details}
        logger.error(f"오류: {error_type} (실현 {realization}) - {_dumps(details)}")
        try:
            with open(self.error_path, "a", encoding="utf-8") as f:
                f.write(_dumps(record) + "\n")
            self.error_count += 1
        except Exception as e:
            logger.error(f"오류 로그 파일 쓰기 오류: {str(e)}")
