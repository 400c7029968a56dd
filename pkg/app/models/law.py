"""
전도도 분포(법칙) 및 시드 모델
"""
from __future__ import annotations

from typing import Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ConductanceLaw(BaseModel):
    """
    변마다 독립 동분포로 뽑히는 전도도의 법칙.

    - two_point(lo, hi, p): 확률 p 로 lo, 1-p 로 hi
    - uniform(lam): [lam, 1] 균등분포
    - scaled_beta(alpha, beta, lam): x ~ Beta(alpha, beta) 를 lam + (1-lam) x 로 사상
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["two_point", "uniform", "scaled_beta"] = "two_point"
    lo: float = 0.5
    hi: float = 1.0
    p: float = 0.5
    lam: float = Field(0.5, gt=0.0, le=1.0, description="타원성 하한 λ")
    alpha: float = Field(2.0, gt=0.0)
    beta: float = Field(2.0, gt=0.0)

    @model_validator(mode="after")
    def _check_support(self):
        if self.kind == "two_point":
            if not (0.0 < self.p < 1.0):
                raise ValueError("two_point 의 p 는 (0, 1) 구간이어야 합니다")
            if not (self.lam <= self.lo <= 1.0 and self.lam <= self.hi <= 1.0):
                raise ValueError(f"two_point 의 값은 [λ, 1] = [{self.lam}, 1] 안에 있어야 합니다")
        return self

    @classmethod
    def two_point(cls, lo: float, hi: float, p: float) -> "ConductanceLaw":
        return cls(kind="two_point", lo=lo, hi=hi, p=p, lam=min(lo, hi))

    @classmethod
    def uniform(cls, lam: float) -> "ConductanceLaw":
        return cls(kind="uniform", lam=lam)

    @classmethod
    def scaled_beta(cls, alpha: float, beta: float, lam: float) -> "ConductanceLaw":
        return cls(kind="scaled_beta", alpha=alpha, beta=beta, lam=lam)

    @property
    def support(self) -> Tuple[float, float]:
        if self.kind == "two_point":
            return (min(self.lo, self.hi), max(self.lo, self.hi))
        return (self.lam, 1.0)

    @property
    def is_degenerate(self) -> bool:
        return self.kind == "two_point" and self.lo == self.hi

    def mean(self) -> float:
        if self.kind == "two_point":
            return self.p * self.lo + (1 - self.p) * self.hi
        if self.kind == "uniform":
            return 0.5 * (1.0 + self.lam)
        return self.lam + (1.0 - self.lam) * self.alpha / (self.alpha + self.beta)

    def tag(self) -> str:
        """파일 이름에 쓰는 짧은 식별자"""
        if self.kind == "two_point":
            return f"tp{self.lo:g}-{self.hi:g}-{self.p:g}"
        if self.kind == "uniform":
            return f"un{self.lam:g}"
        return f"sb{self.alpha:g}-{self.beta:g}-{self.lam:g}"


class SeedSpec(BaseModel):
    """
    카운터 기반 난수 스트림 식별자.
    같은 (master_seed, realization_index, purpose) 는 비트 단위로 같은 값을 만듭니다.
    """
    model_config = ConfigDict(frozen=True)

    master_seed: int = Field(..., ge=0, lt=2 ** 64)
    realization_index: int = Field(0, ge=0)
    purpose: str = "field"

    def for_realization(self, index: int) -> "SeedSpec":
        return self.model_copy(update={"realization_index": index})

    def with_purpose(self, purpose: str) -> "SeedSpec":
        return self.model_copy(update={"purpose": purpose})


class EdgePerturbation(BaseModel):
    """단일 변 재표본: 변 b = (z_b, e_b) 와 이전/새 전도도"""
    model_config = ConfigDict(frozen=True)

    node: int = Field(..., ge=0)
    direction: int = Field(..., ge=0)
    old_value: float
    new_value: float

    @property
    def delta(self) -> float:
        """Δ_b a(b) = a(b) - a^b(b)"""
        return self.old_value - self.new_value
