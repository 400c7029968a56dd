"""
실현 하나에 대한 교정자 파이프라인 결과 모델
"""
from __future__ import annotations

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from app.models.lattice import EdgeField, MatrixField, NodeField, TorusGrid
from app.models.law import EdgePerturbation, SeedSpec
from app.models.solver import SolveRecord
from app.modules.lattice import forward_gradient


def _frozen_array(v) -> np.ndarray:
    arr = np.array(v, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


class CorrectorPack(BaseModel):
    """
    (a, φ_L, q, σ_L, ā_L) 묶음. 생성 후 변경되지 않습니다.

    - phi[i]: 평균 0 주기 교정자 φ_{L,i}
    - flux[i]: q_i = a(∇φ_i + e_i) - ā_L e_i
    - sigma: (d, d, d, node_count) 배열, sigma[i, j, k] = σ_ijk (flux corrector 를 풀지 않았으면 None)
    - abar: ā_L (열 i 는 a(∇φ_i + e_i) 의 공간 평균)
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    a: EdgeField
    phi: List[NodeField]
    flux: List[EdgeField]
    abar: np.ndarray
    sigma: Optional[np.ndarray] = None
    reports: List[SolveRecord] = []
    seed: Optional[SeedSpec] = None

    @field_validator("abar", "sigma", mode="before")
    @classmethod
    def _as_array(cls, v):
        return None if v is None else _frozen_array(v)

    @property
    def grid(self) -> TorusGrid:
        return self.a.grid

    @property
    def d(self) -> int:
        return self.a.grid.d

    @property
    def has_flux_corrector(self) -> bool:
        return self.sigma is not None

    def corrector_gradient(self, i: int) -> EdgeField:
        """∇φ_i + e_i"""
        values = np.array(forward_gradient(self.phi[i]).values)
        values[:, i] += 1.0
        return EdgeField(grid=self.grid, values=values)

    def gradients(self) -> MatrixField:
        """노드마다 [i, j] = (∇φ_i + e_i)_j"""
        return MatrixField.from_rows(self.corrector_gradient(i) for i in range(self.d))

    def sigma_field(self, i: int, j: int, k: int) -> NodeField:
        if self.sigma is None:
            raise ValueError("flux corrector 가 계산되지 않았습니다")
        return NodeField(grid=self.grid, values=self.sigma[i, j, k])


class CommutatorField(BaseModel):
    """Ξ_ij = e_j·(a - ā_ref)(∇φ_i + e_i) 와 사용한 기준 행렬 ā_ref"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    xi: MatrixField
    abar_ref: np.ndarray

    @field_validator("abar_ref", mode="before")
    @classmethod
    def _as_array(cls, v):
        return _frozen_array(v)

    @property
    def grid(self) -> TorusGrid:
        return self.xi.grid

    def mean(self) -> np.ndarray:
        """공간 평균 ⨍Ξ (d×d)"""
        return self.xi.values.mean(axis=0)


class VerticalDerivativeResult(BaseModel):
    """Δ_bΞ 를 직접 계산한 값과 표현식으로 계산한 값의 비교"""
    perturbation: EdgePerturbation
    discrepancy: float
    scale: float
    first_term_nodes: List[int]
