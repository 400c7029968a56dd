import json

from app.models.solver import SolveRecord, SolveReport
from app.modules.logging import RunLogger


def _lines(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


def test_solves_are_written_one_per_line(tmp_path):
    run = RunLogger(tmp_path)
    run.log_solve(0, 16, "corrector_0", SolveReport(iterations=40, residual=5e-11))
    run.log_solves(1, 16, [SolveRecord(purpose="corrector_0", iterations=41, residual=6e-11),
                           SolveRecord(purpose="corrector_1", iterations=39, residual=7e-11)])
    lines = _lines(tmp_path / "run.log")
    assert run.solve_count == 3
    assert [(r["realization"], r["purpose"]) for r in lines] == [(0, "corrector_0"), (1, "corrector_0"),
                                                                 (1, "corrector_1")]
    assert lines[0]["parameter"] == 16
    assert lines[0]["iterations"] == 40
    assert lines[0]["backend"] == "cg"


def test_errors_go_to_their_own_file(tmp_path):
    run = RunLogger(tmp_path)
    run.log_error("NonConvergence", {"residual": 1e-3, "iterations": 5000}, realization=7)
    lines = _lines(tmp_path / "errors.jsonl")
    assert lines == [{"error_type": "NonConvergence", "realization": 7,
                      "details": {"residual": 1e-3, "iterations": 5000}}]
    assert run.error_count == 1
    assert (tmp_path / "run.log").read_text(encoding="utf-8") == ""


def test_restart_truncates_previous_logs(tmp_path):
    RunLogger(tmp_path).log_solve(0, 8, "solution", SolveReport())
    RunLogger(tmp_path)
    assert (tmp_path / "run.log").read_text(encoding="utf-8") == ""
