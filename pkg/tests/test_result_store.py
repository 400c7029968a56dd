import numpy as np
import pytest

from app.models.law import ConductanceLaw
from app.models.solver import SolveConfig, SolveRecord
from app.modules.worker_pool import RealizationOutcome
from app.services.result_store import ResultStore, cache_key


@pytest.fixture
def store(tmp_path):
    s = ResultStore()
    s.initialize(tmp_path / "cache")
    return s


def _outcome():
    payload = {"abar": np.array([[0.1 + 0.2, 1.0 / 3.0], [1.0 / 3.0, 0.7]]), "mean_gradient": np.identity(2)}
    records = [SolveRecord(purpose="corrector_0", iterations=12, residual=3.3e-11)]
    return RealizationOutcome(index=4, payload=payload, records=records)


def test_key_is_stable_and_sensitive(law):
    key = cache_key("rve", 1, 0, 8, 2, law, SolveConfig(tol=1e-10))
    assert key == cache_key("rve", 1, 0, 8, 2, law, SolveConfig(tol=1e-10))
    others = {
        cache_key("rve", 2, 0, 8, 2, law, SolveConfig(tol=1e-10)),
        cache_key("rve", 1, 1, 8, 2, law, SolveConfig(tol=1e-10)),
        cache_key("rve", 1, 0, 16, 2, law, SolveConfig(tol=1e-10)),
        cache_key("rve", 1, 0, 8, 2, ConductanceLaw.uniform(0.5), SolveConfig(tol=1e-10)),
        cache_key("rve", 1, 0, 8, 2, law, SolveConfig(tol=1e-9)),
        cache_key("gk", 1, 0, 8, 2, law, SolveConfig(tol=1e-10)),
        cache_key("rve", 1, 0, 8, 2, law, SolveConfig(tol=1e-10), abar_ref=np.identity(2)),
    }
    assert key not in others
    assert len(others) == 7


def test_stored_arrays_are_bit_identical(store):
    key = "ab" + "0" * 62
    original = _outcome()
    store.put(key, original)
    loaded = store.get(key)
    assert loaded.index == 4
    assert np.array_equal(loaded.payload["abar"], original.payload["abar"])
    assert loaded.payload["abar"].shape == (2, 2)
    assert loaded.records[0].residual == 3.3e-11
    assert loaded.ok


def test_missing_and_corrupt_entries(store):
    assert store.get("cd" + "1" * 62) is None
    key = "ef" + "2" * 62
    store.put(key, _outcome())
    path = store._path(key)
    path.write_text("{not json", encoding="utf-8")
    assert store.get(key) is None


def test_failures_are_stored(store):
    key = "01" + "3" * 62
    store.put(key, RealizationOutcome(index=2, error={"type": "NonConvergence", "message": "x"}))
    loaded = store.get(key)
    assert not loaded.ok
    assert loaded.error["type"] == "NonConvergence"


def test_disabled_store(tmp_path):
    s = ResultStore()
    s.initialize(tmp_path / "off", enabled=False)
    assert not s.enabled
    s.put("aa" + "4" * 62, _outcome())
    assert s.get("aa" + "4" * 62) is None
    assert not (tmp_path / "off").exists()
