import logging
import subprocess
from functools import lru_cache
from typing import Sequence

from app.settings import BASEPATH, SRC_LOG_LEVELS

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["CLI"])

# 스윕 파라미터 표기: clt/pathwise 는 ε = 1/side 이므로 "e", 나머지는 토러스 한 변 "L"
PARAMETER_PREFIX = {
    "clt": "e",
    "pathwise": "e",
}


@lru_cache(maxsize=1)
def git_describe() -> str:
    """
    빌드 식별자 (git describe --always --dirty --tags).

    Returns:
        str: 식별자, git 저장소가 아니면 "nogit"
    """
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=BASEPATH.parent, capture_output=True, text=True, timeout=10,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError) as e:
        logger.debug(f"git describe 실패: {e}")
    return "nogit"


def sweep_label(kind: str, sides: Sequence[int]) -> str:
    prefix = PARAMETER_PREFIX.get(kind, "L")
    return prefix + "-".join(str(int(s)) for s in sides)


def study_name(kind: str, d: int, sides: Sequence[int], N: int, law_tag: str, build: str = None) -> str:
    """
    결과 폴더 이름: <kind>_d<d>_<L 또는 ε 목록>_N<N>_<법칙>_<빌드>

    예) rve_d2_L8-16-32_N2000_tp0.5-1-0.5_v0.2.0
    """
    build = build or git_describe()
    safe = "".join(c if c.isalnum() or c in "-._" else "-" for c in build)
    return f"{kind}_d{d}_{sweep_label(kind, sides)}_N{N}_{law_tag}_{safe}"
