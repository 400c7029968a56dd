"""
이산 미분 연산 (주기 격자)

- forward_gradient:    (∇u)_i(x) = u(x+e_i) - u(x)
- backward_divergence: (∇*·F)(x) = Σ_i F_i(x) - F_i(x-e_i)
- apply_operator:      -∇*·a∇u

-∇*· 가 ∇ 의 ℓ² 수반이므로 Σ_x ∇u·F = -Σ_x u (∇*·F) 가 정확히 성립합니다.
"""
import logging
from functools import lru_cache
from pathlib import Path
from typing import Type, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from app.models.lattice import EdgeField, MatrixField, NodeField, TorusGrid
from app.settings import SRC_LOG_LEVELS

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["MODULE"])

# CSV 로 내보낼 수 있는 최대 노드 수
MAX_CSV_NODES = 1 << 16

_HEADER_DTYPE = np.dtype("<i8")
_VALUE_DTYPE = np.dtype("<f8")


def _axes(grid: TorusGrid):
    return tuple(range(grid.d))


def forward_gradient(u: NodeField) -> EdgeField:
    grid = u.grid
    view = u.values.reshape(grid.shape)
    comps = [(np.roll(view, -1, axis=i) - view).ravel() for i in range(grid.d)]
    return EdgeField(grid=grid, values=np.stack(comps, axis=-1))


def backward_divergence(F: EdgeField) -> NodeField:
    grid = F.grid
    out = np.zeros(grid.shape)
    for i in range(grid.d):
        comp = F.values[:, i].reshape(grid.shape)
        out += comp - np.roll(comp, 1, axis=i)
    return NodeField(grid=grid, values=out.ravel())


def apply_operator(a: EdgeField, u: NodeField) -> NodeField:
    """-∇*·a∇u(x) = Σ_{z~x} a(x,z)(u(x) - u(z))"""
    flux = forward_gradient(u).values * a.values
    return -backward_divergence(EdgeField(grid=u.grid, values=flux))


def apply_constant(abar: np.ndarray, F: EdgeField) -> EdgeField:
    """노드마다 상수 행렬 곱: (āF)(x) = ā F(x)"""
    return EdgeField(grid=F.grid, values=F.values @ np.asarray(abar, dtype=np.float64).T)


@lru_cache(maxsize=32)
def gradient_matrix(grid: TorusGrid) -> sp.csr_matrix:
    """
    희소 전방 기울기 행렬 G (edge_count × node_count).
    변 인덱스는 x*d + i 이며 EdgeField.values.ravel() 순서와 같습니다.
    그러면 -∇*·h = Gᵀ h, -∇*·a∇ = Gᵀ diag(a) G 입니다.
    """
    n, d = grid.node_count, grid.d
    nodes = np.arange(n)
    view = nodes.reshape(grid.shape)
    rows, cols, vals = [], [], []
    for i in range(d):
        plus = np.roll(view, -1, axis=i).ravel()
        edge = nodes * d + i
        rows += [edge, edge]
        cols += [plus, nodes]
        vals += [np.ones(n), -np.ones(n)]
    G = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n * d, n),
    )
    logger.debug(f"기울기 행렬 생성: d={d}, L={grid.L}, nnz={G.nnz}")
    return G


def operator_matrix(a: EdgeField) -> sp.csr_matrix:
    """-∇*·a∇ 의 희소 행렬 (대칭 양의 준정부호, 핵 = 상수)"""
    G = gradient_matrix(a.grid)
    return (G.T @ sp.diags(a.values.ravel()) @ G).tocsr()


def constant_operator_matrix(grid: TorusGrid, abar: np.ndarray) -> sp.csr_matrix:
    """-∇*·ā∇ 의 희소 행렬 (ā 는 비대각 성분 허용)"""
    G = gradient_matrix(grid)
    block = sp.kron(sp.identity(grid.node_count, format="csr"), sp.csr_matrix(np.asarray(abar, dtype=np.float64)))
    return (G.T @ block @ G).tocsr()


def shift(field, vector):
    """토러스 평행이동 out(x) = field(x - vector)"""
    return field.shifted(vector)


#####################################
## 직렬화
#####################################

AnyField = Union[NodeField, EdgeField, MatrixField]


def _components(field: AnyField) -> int:
    return int(np.prod(field.values.shape[1:], dtype=np.int64)) if field.values.ndim > 1 else 1


def save_field(field: AnyField, path: Union[str, Path]) -> Path:
    """
    리틀 엔디언 이진 형식으로 저장합니다.
    헤더: int64 × 3 (d, L, 성분 수), 이어서 float64 값 (노드 우선, 성분이 가장 빠르게 변함)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.array([field.grid.d, field.grid.L, _components(field)], dtype=_HEADER_DTYPE)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.ascontiguousarray(field.values, dtype=_VALUE_DTYPE).tobytes())
    return path


def load_field(path: Union[str, Path], kind: Type[AnyField] = NodeField) -> AnyField:
    """save_field 형식의 파일을 읽습니다."""
    raw = Path(path).read_bytes()
    d, L, m = (int(v) for v in np.frombuffer(raw[:24], dtype=_HEADER_DTYPE))
    grid = TorusGrid(d=d, L=L)
    values = np.frombuffer(raw[24:], dtype=_VALUE_DTYPE).astype(np.float64)
    if kind is MatrixField:
        values = values.reshape(grid.node_count, d, d)
    elif kind is EdgeField or m > 1:
        values = values.reshape(grid.node_count, m)
    return kind(grid=grid, values=values)


def field_to_frame(field: AnyField) -> pd.DataFrame:
    """작은 격자용 표 형식: node, x0..x{d-1}, c0..c{m-1}"""
    grid = field.grid
    if grid.node_count > MAX_CSV_NODES:
        raise ValueError(f"CSV 내보내기는 {MAX_CSV_NODES} 노드 이하에서만 지원됩니다")
    coords = grid.coordinates()
    flat = field.values.reshape(grid.node_count, -1)
    frame = pd.DataFrame({"node": np.arange(grid.node_count)})
    for k in range(grid.d):
        frame[f"x{k}"] = coords[:, k]
    for c in range(flat.shape[1]):
        frame[f"c{c}"] = flat[:, c]
    return frame


def save_field_csv(field: AnyField, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    field_to_frame(field).to_csv(path, index=False, float_format="%.17g")
    return path
