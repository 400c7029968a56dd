"""
격자 기하 및 필드 컨테이너 모델

- TorusGrid: 주기 격자 Z^d_L (행 우선 노드 인덱싱)
- NodeField: 노드당 스칼라(또는 m 성분) 값
- EdgeField: 노드 x 마다 d 개의 값, i 번째 값은 변 (x, x+e_i) 에 대응
- MatrixField: 노드당 d×d 값 (Ξ, 이산화된 테스트 텐서 F)

모든 필드는 평탄(contiguous) float64 배열로 저장되며 생성 후 읽기 전용입니다.
"""
from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.settings import SRC_LOG_LEVELS

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["MODEL"])


class TorusGrid(BaseModel):
    """주기 격자 [0, L)^d"""
    model_config = ConfigDict(frozen=True)

    d: int = Field(..., ge=1, description="차원")
    L: int = Field(..., ge=2, description="한 변의 길이")

    @property
    def node_count(self) -> int:
        return self.L ** self.d

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.L,) * self.d

    @property
    def edge_count(self) -> int:
        return self.node_count * self.d

    def index_of(self, coords) -> int:
        """격자 좌표 → 노드 인덱스 (주기적으로 감쌈)"""
        coords = np.mod(np.asarray(coords, dtype=np.int64), self.L)
        return int(np.ravel_multi_index(tuple(coords), self.shape))

    def coords_of(self, index: int) -> Tuple[int, ...]:
        """노드 인덱스 → 격자 좌표"""
        return tuple(int(c) for c in np.unravel_index(int(index), self.shape))

    def neighbor(self, index: int, direction: int, step: int = 1) -> int:
        """direction 방향으로 step 만큼 이동한 이웃 노드 인덱스"""
        coords = np.array(self.coords_of(index))
        coords[direction] += step
        return self.index_of(coords)

    def coordinates(self) -> np.ndarray:
        """모든 노드의 정수 좌표 (node_count, d), 행 우선 순서"""
        axes = np.meshgrid(*[np.arange(self.L)] * self.d, indexing="ij")
        return np.stack([ax.ravel() for ax in axes], axis=-1)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """
        연속 좌표(격자 단위)를 조각별 상수 확장 규칙으로 노드 인덱스에 대응시킵니다.
        점 y 는 Q(x) = x + [-1/2, 1/2)^d 에 속하는 노드 x 로 보냅니다.
        """
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        cells = np.mod(np.floor(points + 0.5).astype(np.int64), self.L)
        return np.ravel_multi_index(tuple(cells.T), self.shape)


class _LatticeField(BaseModel):
    """필드 공통 기반 클래스"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: TorusGrid
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, v):
        arr = np.array(v, dtype=np.float64, copy=True, order="C")
        if not np.all(np.isfinite(arr)):
            raise ValueError("필드 값은 유한해야 합니다")
        arr.setflags(write=False)
        return arr

    def _expected_tail(self) -> Optional[Tuple[int, ...]]:
        raise NotImplementedError

    @model_validator(mode="after")
    def _check_shape(self):
        tail = self._expected_tail()
        if tail is None or self.values.shape != (self.grid.node_count,) + tail:
            raise ValueError(f"필드 크기 불일치: {self.values.shape} (노드 수 {self.grid.node_count})")
        return self

    def with_values(self, values: np.ndarray):
        return type(self)(grid=self.grid, values=values)

    def grid_view(self) -> np.ndarray:
        """(L,)*d + 성분 형태의 복사본"""
        return self.values.reshape(self.grid.shape + self.values.shape[1:]).copy()

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def shifted(self, shift) -> "_LatticeField":
        """격자 벡터만큼 평행이동한 필드: out(x) = self(x - shift)"""
        view = self.values.reshape(self.grid.shape + self.values.shape[1:])
        rolled = np.roll(view, tuple(int(s) for s in shift), axis=tuple(range(self.grid.d)))
        return self.with_values(rolled.reshape(self.values.shape))

    def _check_same(self, other: "_LatticeField"):
        if type(other) is not type(self) or other.grid != self.grid:
            raise ValueError("같은 격자 위의 같은 종류 필드끼리만 연산할 수 있습니다")

    def __add__(self, other):
        self._check_same(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        self._check_same(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: float):
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


class NodeField(_LatticeField):
    """노드당 값: (node_count,) 또는 (node_count, m)"""

    def _expected_tail(self) -> Optional[Tuple[int, ...]]:
        if self.values.ndim not in (1, 2):
            return None
        return tuple(self.values.shape[1:])

    @property
    def components(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "NodeField":
        return cls(grid=grid, values=np.zeros(grid.node_count))


class EdgeField(_LatticeField):
    """노드 x 마다 d 개 값, 성분 i 는 변 (x, x+e_i)"""

    def _expected_tail(self) -> Tuple[int, ...]:
        return (self.grid.d,)

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "EdgeField":
        return cls(grid=grid, values=np.zeros((grid.node_count, grid.d)))

    @classmethod
    def constant(cls, grid: TorusGrid, value) -> "EdgeField":
        vals = np.broadcast_to(np.asarray(value, dtype=np.float64), (grid.node_count, grid.d))
        return cls(grid=grid, values=vals)

    def component(self, i: int) -> NodeField:
        return NodeField(grid=self.grid, values=self.values[:, i])

    def dot(self, other: "EdgeField") -> float:
        """ℓ² 내적 Σ_x F(x)·G(x)"""
        self._check_same(other)
        return float(np.sum(self.values * other.values))


class MatrixField(_LatticeField):
    """노드당 d×d 값"""

    def _expected_tail(self) -> Tuple[int, ...]:
        return (self.grid.d, self.grid.d)

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "MatrixField":
        return cls(grid=grid, values=np.zeros((grid.node_count, grid.d, grid.d)))

    def row(self, i: int) -> EdgeField:
        """i 번째 행 (Ξ_i 처럼 j 로 색인되는 벡터장)"""
        return EdgeField(grid=self.grid, values=self.values[:, i, :])

    @classmethod
    def from_rows(cls, rows) -> "MatrixField":
        rows = list(rows)
        grid = rows[0].grid
        return cls(grid=grid, values=np.stack([r.values for r in rows], axis=1))
