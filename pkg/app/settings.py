import os
import logging
from pathlib import Path
from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings
from typing import Dict, List, Literal

# .env 파일 로드
load_dotenv()

#####################################
## logging
#####################################

BASEPATH = Path(__file__).resolve().parent

logging.basicConfig(
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

logger = logging.getLogger(__name__)


def _level_from_env(variable: str, default: str) -> str:
    """환경 변수의 로그 레벨 이름 (비었거나 모르는 이름이면 default)"""
    level = os.environ.get(variable, "").strip().upper()
    # logging.getLevelNamesMapping() is Python 3.11+; same mapping on 3.10
    names = getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))()
    return level if level in names else default


GLOBAL_LOG_LEVEL = _level_from_env("GLOBAL_LOG_LEVEL", "INFO")

# 계층별 로그 레벨: main / 설정 / 수치 모듈 / 서비스 / 모델 / 명령행
log_sources = [
    "MAIN",
    "CONFIG",
    "MODULE",
    "SERVICE",
    "MODEL",
    "CLI",
]

SRC_LOG_LEVELS: Dict[str, str] = {
    source: _level_from_env(f"{source}_LOG_LEVEL", GLOBAL_LOG_LEVEL) for source in log_sources
}

logger.setLevel(SRC_LOG_LEVELS["CONFIG"])
logger.debug(f"계층별 로그 레벨: {SRC_LOG_LEVELS}")

#####################################
## PATHS
#####################################

# 결과 경로 (HOMOG_OUTPUT_DIR 로 덮어쓰기 가능)
OUTPUT_PATH = Path(os.getenv("HOMOG_OUTPUT_DIR", str(BASEPATH.parent / "results"))).resolve()

# 로그 경로
LOG_PATH = Path(os.environ.get("LOG_PATH", "logs")).resolve()
LOG_FILE: str = str(LOG_PATH / "homog.log")

logger.debug(f"결과 경로: {OUTPUT_PATH}")
logger.debug(f"로그 경로: {LOG_PATH}")

# 폴더 생성 (결과 폴더는 스터디 실행 시 생성)
PATHS: List[Path] = [LOG_PATH]

try:
    for path in PATHS:
        path.exists() or os.makedirs(path, exist_ok=True)
except Exception as e:
    raise RuntimeError(f"폴더 생성 실패: {e}") from e


def _flag(variable: str, default: str) -> bool:
    return os.getenv(variable, default).lower() in ["true", "1", "yes"]


#####################################
## Settings
#####################################

class Settings(BaseSettings):
    # 애플리케이션 설정
    APP_NAME: str = "Homogenization Fluctuation Lab"

    # 결과 저장 설정
    OUTPUT_PATH: str = str(OUTPUT_PATH)
    CACHE_ENABLE: bool = _flag("CACHE_ENABLE", "True")

    # 병렬 실행 설정 (기본값: 사용 가능한 CPU 수)
    DEFAULT_WORKERS: int = Field(int(os.getenv("HOMOG_WORKERS", str(os.cpu_count() or 1))), ge=1)

    # 선형 솔버 기본값 (.env 파일에서 조정 가능)
    SOLVER_TOLERANCE: float = Field(float(os.getenv("SOLVER_TOLERANCE", "1e-10")), gt=0.0)  # 상대 잔차 허용치
    SOLVER_MAX_ITERATIONS: int = Field(int(os.getenv("SOLVER_MAX_ITERATIONS", "20000")), ge=1)
    SOLVER_PRECONDITIONER: Literal["none", "jacobi", "constant_coefficient"] = os.getenv(
        "SOLVER_PRECONDITIONER", "constant_coefficient")
    CONSTANT_BACKEND: Literal["spectral", "iterative"] = os.getenv("CONSTANT_BACKEND", "spectral")

settings = Settings()
