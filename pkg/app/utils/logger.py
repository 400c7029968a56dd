import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import TYPE_CHECKING, Iterator, Optional, Union

from loguru import logger

from app.settings import (
    GLOBAL_LOG_LEVEL,
    LOG_FILE
)


if TYPE_CHECKING:
    from loguru import Record


def stdout_format(record: "Record") -> str:
    """
    콘솔/파일 출력용 로그 포맷.
    스터디 안에서 나온 로그는 [스터디 이름] 이 앞에 붙고, 나머지 extra 는 JSON 으로 뒤에 붙습니다.
    """
    extra = {k: v for k, v in record["extra"].items() if k not in ("study", "extra_json", "study_tag")}
    record["extra"]["extra_json"] = json.dumps(extra, default=str, ensure_ascii=False) if extra else ""
    record["extra"]["study_tag"] = f"[{record['extra']['study']}] " if "study" in record["extra"] else ""
    return (
        "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | "
        "<level>{level: <8}</level> | "
        "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - "
        "{extra[study_tag]}<level>{message}</level> {extra[extra_json]}"
        "\n{exception}"
    )


class InterceptHandler(logging.Handler):
    """
    표준 logging 레코드를 loguru 로 넘깁니다 (모듈별 SRC_LOG_LEVELS 필터는 표준 logging 쪽에서 적용됨).
    """

    def emit(self, record):
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = sys._getframe(6), 6
        while frame and frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        logger.opt(depth=depth, exception=record.exc_info).log(
            level, record.getMessage()
        )


def start_logger(log_file: Optional[str] = LOG_FILE, level: str = GLOBAL_LOG_LEVEL):
    """
    loguru 로거를 초기화합니다.

    - 콘솔(stderr) 핸들러. stdout 은 명령 결과(리포트) 출력용
    - 파일 핸들러: 매일 자정 로테이션, 30일 보관
    - 표준 logging 을 InterceptHandler 로 loguru 에 연결
    """
    logger.remove()
    logger.add(sys.stderr, level=level, format=stdout_format)

    if log_file:
        logger.add(
            log_file,
            level=level,
            rotation="00:00",
            retention="30 days",
            compression="zip",
            format=stdout_format,
            encoding="utf-8"
        )

    logging.basicConfig(
        handlers=[InterceptHandler()], force=True
    )
    # loky 작업자 재사용 메시지
    logging.getLogger("joblib").setLevel(level)

    logger.info(f"GLOBAL_LOG_LEVEL: {level}")
    logger.info(f"로그 파일 핸들러 초기화 완료: {log_file}")


@contextmanager
def study_logging(directory: Union[str, Path], name: str, level: str = GLOBAL_LOG_LEVEL) -> Iterator[None]:
    """
    블록 안의 로그에 스터디 이름을 붙이고, 같은 로그를 스터디 폴더의 study.log 에도 씁니다.

    study.log 에는 시각이 들어가므로 재현성 비교 대상 (study.csv, summary.json, run.log) 과 분리됩니다.
    """
    path = Path(directory) / "study.log"
    path.parent.mkdir(parents=True, exist_ok=True)
    handler_id = logger.add(
        str(path),
        level=level,
        format=stdout_format,
        filter=lambda record: record["extra"].get("study") == name,
        mode="w",
        encoding="utf-8",
    )
    try:
        with logger.contextualize(study=name):
            yield
    finally:
        logger.remove(handler_id)
