import pytest

from app.models.solver import SolveRecord
from app.modules.worker_pool import RealizationOutcome, chunked, run_realizations
from app.utils.exceptions import NonConvergence


def square_task(index: int) -> RealizationOutcome:
    record = SolveRecord(purpose="corrector_0", iterations=index, residual=1e-12)
    return RealizationOutcome(index=index, payload={"value": index * index}, records=[record])


def flaky_task(index: int) -> RealizationOutcome:
    if index % 3 == 1:
        raise NonConvergence(f"실현 {index} 미수렴", residual=1e-3, iterations=7)
    return square_task(index)


def broken_task(index: int) -> RealizationOutcome:
    raise RuntimeError("프로그래밍 오류")


def test_chunks_preserve_order():
    chunks = chunked(range(10), 2)
    assert [i for c in chunks for i in c] == list(range(10))
    assert chunked([], 4) == []


@pytest.mark.parametrize("workers", [1, 2])
def test_results_come_back_in_index_order(workers):
    outcomes = run_realizations(square_task, range(12), workers)
    assert [o.index for o in outcomes] == list(range(12))
    assert [o.payload["value"] for o in outcomes] == [i * i for i in range(12)]


def test_parallel_matches_sequential():
    sequential = run_realizations(flaky_task, range(9), 1)
    parallel = run_realizations(flaky_task, range(9), 2)
    assert [o.model_dump() for o in parallel] == [o.model_dump() for o in sequential]


def test_domain_failures_are_captured():
    outcomes = run_realizations(flaky_task, range(6), 1)
    failed = [o for o in outcomes if not o.ok]
    assert [o.index for o in failed] == [1, 4]
    assert failed[0].error == {"type": "NonConvergence", "message": "실현 1 미수렴",
                               "residual": 1e-3, "iterations": 7}
    assert failed[0].payload is None


def test_other_exceptions_propagate():
    with pytest.raises(RuntimeError):
        run_realizations(broken_task, range(2), 1)
