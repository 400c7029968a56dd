"""
도메인 예외 정의

모든 예외는 HomogenizationError 를 상속합니다. 스터디 드라이버는 실현(realization)
단위로 NonConvergence 를 잡아 기록하고 나머지 실현으로 계속 진행합니다.
"""
from typing import Any, List, Optional

import numpy as np


class HomogenizationError(Exception):
    """패키지 공통 기본 예외"""


class NonConvergence(HomogenizationError):
    """반복 솔버가 최대 반복 횟수 안에 허용치에 도달하지 못함"""

    def __init__(self, message: str, best_iterate: Optional[np.ndarray] = None,
                 residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.best_iterate = best_iterate
        self.residual = residual
        self.iterations = iterations


class SingularSymbol(HomogenizationError):
    """상수 계수 행렬이 양의 정부호가 아님"""

    def __init__(self, message: str, matrix: Optional[np.ndarray] = None,
                 min_eigenvalue: float = float("nan")):
        super().__init__(message)
        self.matrix = matrix
        self.min_eigenvalue = min_eigenvalue


class SupportOverflow(HomogenizationError):
    """테스트 함수의 유효 지지 영역이 상자의 절반을 넘음"""


class InsufficientSamples(HomogenizationError):
    """표본 수 부족"""

    def __init__(self, message: str, required: int = 0, got: int = 0):
        super().__init__(message)
        self.required = required
        self.got = got


class DegenerateSample(HomogenizationError):
    """표본 분산이 0"""


class InsufficientPoints(HomogenizationError):
    """스케일링 피팅에 필요한 점 개수 부족"""


class ConfigError(HomogenizationError):
    """실험 설정 오류 (필드별 메시지 목록 포함)"""

    def __init__(self, messages: List[str], detail: Any = None):
        super().__init__("; ".join(messages))
        self.messages = messages
        self.detail = detail
