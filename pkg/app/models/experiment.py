"""
실험 설정 및 검증 리포트 모델
"""
from __future__ import annotations

from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.law import ConductanceLaw
from app.models.solver import SolveConfig
from app.models.stats import TestFunction
from app.settings import settings

StudyKind = Literal["verify", "rve", "gk", "clt", "pathwise", "normality", "moments"]


class VerifyConfig(BaseModel):
    """항등식 검사 설정"""
    model_config = ConfigDict(extra="forbid")

    tolerance: float = Field(1e-10, ge=0.0, description="검사 기준 허용치 (0 이면 모든 0 아닌 차이가 실패)")
    side: int = Field(16, ge=4)
    pairs: int = Field(20, ge=1, description="수직 미분 검사 (실현, 변) 쌍 수")
    realizations: int = Field(4, ge=1)


class ExperimentConfig(BaseModel):
    """
    실험 한 번의 전체 설정. 모든 값은 풀이 시작 전에 검증되며 summary.json 에 그대로 기록됩니다.

    - sides: 토러스 한 변 목록 (clt/pathwise 에서는 ε = 1/side, gk 에서는 창 크기 L, 토러스는 2L)
    - abar_ref: pilot (별도 시드의 파일럿 RVE), per_realization (실현별 ā_L), fixed (abar_fixed)
    - box, truncation_doubling: pathwise 의 전체 공간 근사 상자 크기와 두 배 상자 비교
    """
    model_config = ConfigDict(extra="forbid")

    kind: StudyKind = "verify"
    d: int = Field(2, ge=1, le=3)
    sides: List[int] = [16]
    N: int = Field(100, ge=2)
    law: ConductanceLaw = ConductanceLaw()
    master_seed: int = Field(0, ge=0, lt=2 ** 64)
    solver: SolveConfig = SolveConfig()
    test_function: TestFunction = TestFunction()
    abar_ref: Literal["pilot", "per_realization", "fixed"] = "pilot"
    abar_fixed: Optional[List[List[float]]] = None
    pilot_side: Optional[int] = Field(None, ge=2)
    pilot_samples: int = Field(32, ge=2)
    nested: List[int] = Field([], description="rve: Q 표준오차를 볼 실현 수 앞부분 크기")
    bootstrap: int = Field(0, ge=0, description="normality: 부트스트랩 재표본 수 (0 이면 생략)")
    box: int = Field(1, ge=1, description="pathwise: 거시 상자 한 변 (토러스 한 변 = box / ε)")
    truncation_doubling: bool = Field(False, description="pathwise: 같은 ε 에서 상자를 두 배로 다시 풀어 I1 분산 변화 확인")
    out: str = settings.OUTPUT_PATH
    workers: int = Field(settings.DEFAULT_WORKERS, ge=1)
    cache: bool = settings.CACHE_ENABLE
    verify: VerifyConfig = VerifyConfig()

    @field_validator("sides")
    @classmethod
    def _check_sides(cls, v: List[int]):
        if not v:
            raise ValueError("sides 는 비어 있을 수 없습니다")
        if any(s < 2 for s in v):
            raise ValueError(f"토러스 한 변은 2 이상이어야 합니다: {v}")
        return v

    @model_validator(mode="after")
    def _check_references(self):
        if self.abar_ref == "fixed":
            if self.abar_fixed is None:
                raise ValueError("abar_ref='fixed' 에는 abar_fixed 가 필요합니다")
            matrix = np.asarray(self.abar_fixed, dtype=np.float64)
            if matrix.shape != (self.d, self.d):
                raise ValueError(f"abar_fixed 크기 {matrix.shape} 가 d={self.d} 와 맞지 않습니다")
            if np.min(np.linalg.eigvalsh(0.5 * (matrix + matrix.T))) <= 0.0:
                raise ValueError("abar_fixed 는 양의 정부호여야 합니다")
        if self.kind in ("clt", "pathwise"):
            # 지지 검사 (SupportOverflow 는 ValueError 로 감싸 필드 메시지로 보고)
            try:
                self.test_function.check_support(self.d)
            except Exception as e:
                raise ValueError(str(e)) from e
        if self.kind == "normality" and self.N < 100:
            raise ValueError("normality 스터디에는 N ≥ 100 이 필요합니다")
        if self.kind == "gk" and self.N < 2:
            raise ValueError("gk 스터디에는 N ≥ 2 가 필요합니다")
        return self

    @property
    def vector_function(self) -> TestFunction:
        """f = g (진폭 생략 시 e₁)"""
        amp = self.test_function.amplitude
        if amp is not None and np.asarray(amp).shape == (self.d,):
            return self.test_function
        return self.test_function.model_copy(update={"amplitude": None})

    @property
    def tensor_function(self) -> TestFunction:
        """F (진폭 생략 시 e₁⊗e₁)"""
        amp = self.test_function.amplitude
        if amp is not None and np.asarray(amp).shape == (self.d, self.d):
            return self.test_function
        return self.test_function.model_copy(update={"amplitude": None})

    def resolved_pilot_side(self) -> int:
        return self.pilot_side or 2 * max(self.sides)


class CheckResult(BaseModel):
    """항등식 검사 하나의 결과"""
    name: str
    discrepancy: float
    threshold: float
    passed: bool
    detail: str = ""


class VerifyReport(BaseModel):
    d: int
    side: int
    tolerance: float
    checks: List[CheckResult] = []

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]
