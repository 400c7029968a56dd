import numpy as np
import pytest

from app.models.lattice import TorusGrid
from app.models.law import ConductanceLaw, SeedSpec
from app.models.solver import SolveConfig
from app.modules.random_fields import sample_field


@pytest.fixture
def law() -> ConductanceLaw:
    """기본 법칙 two_point(0.5, 1, 0.5)"""
    return ConductanceLaw.two_point(0.5, 1.0, 0.5)


@pytest.fixture
def degenerate_law() -> ConductanceLaw:
    return ConductanceLaw.two_point(0.7, 0.7, 0.5)


@pytest.fixture
def seed() -> SeedSpec:
    return SeedSpec(master_seed=20240601)


@pytest.fixture
def tight() -> SolveConfig:
    """항등식 비교용 엄격한 솔버 설정"""
    return SolveConfig(tol=1e-12, max_iterations=50000)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def field_2d(law, seed):
    return sample_field(TorusGrid(d=2, L=8), law, seed)


@pytest.fixture
def field_1d(law, seed):
    return sample_field(TorusGrid(d=1, L=32), law, seed)
