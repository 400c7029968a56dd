from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from app.settings import settings


class SolveConfig(BaseModel):
    """선형 솔버 설정"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    tol: float = Field(settings.SOLVER_TOLERANCE, gt=0.0, description="상대 잔차 허용치")
    max_iterations: int = Field(settings.SOLVER_MAX_ITERATIONS, ge=1)
    preconditioner: Literal["none", "jacobi", "constant_coefficient"] = settings.SOLVER_PRECONDITIONER
    constant_backend: Literal["spectral", "iterative"] = settings.CONSTANT_BACKEND

    def tightened(self, tol: float) -> "SolveConfig":
        return self.model_copy(update={"tol": tol})


class SolveReport(BaseModel):
    """단일 풀이 보고서 (run.log 에 한 줄씩 기록). 반복 횟수를 세지 않는 상수 계수 풀이는 iterations=None"""
    iterations: Optional[int] = None
    residual: float = 0.0
    backend: str = "cg"
    converged: bool = True


class SolveRecord(SolveReport):
    """용도가 붙은 풀이 보고서 (예: corrector_0, flux_corrector_0_0_1)"""
    purpose: str
