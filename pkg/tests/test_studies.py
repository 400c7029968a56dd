import json
import math

import pandas as pd
import pytest

from app.main import EXIT_CHECK_FAILED, EXIT_CONFIG_ERROR, EXIT_OK, main
from app.models.experiment import ExperimentConfig, VerifyConfig
from app.models.law import ConductanceLaw
from app.models.solver import SolveConfig
from app.services import oracles
from app.services.studies import run_study, run_verify
from app.utils.naming import study_name

OUTPUT_FILES = ("study.csv", "summary.json", "run.log", "errors.jsonl")


def _config(out, **kwargs):
    params = dict(kind="rve", d=2, sides=[4, 8], N=4, master_seed=31, out=str(out), cache=False, workers=1)
    params.update(kwargs)
    return ExperimentConfig(**params)


def _read(directory):
    return {name: (directory / name).read_bytes() for name in OUTPUT_FILES}


def test_study_name_format():
    law = ConductanceLaw.two_point(0.5, 1.0, 0.5)
    assert study_name("rve", 2, [8, 16, 32], 2000, law.tag(), "v0.2.0") == "rve_d2_L8-16-32_N2000_tp0.5-1-0.5_v0.2.0"
    assert study_name("clt", 3, [8, 16], 100, "un0.5", "abc/def").startswith("clt_d3_e8-16_N100_un0.5_abc-def")


def test_rve_study_writes_outputs(tmp_path):
    result, directory = run_study(_config(tmp_path, nested=[2, 4]))
    assert directory.parent == tmp_path
    assert all((directory / name).exists() for name in OUTPUT_FILES)
    assert (directory / "study.log").exists()

    frame = pd.read_csv(directory / "study.csv")
    assert len(frame) == 8
    assert list(frame["realization"][:4]) == [0, 1, 2, 3]

    summary = json.loads((directory / "summary.json").read_text(encoding="utf-8"))
    assert summary["config"]["N"] == 4
    assert "workers" not in summary["config"]
    assert "out" not in summary["config"]
    extras = summary["result"]["extras"]
    assert extras["realized"] == {"4": 4, "8": 4}
    assert extras["solves"] == 16
    assert extras["failures"] == 0
    assert extras["8"]["commutator_form_deviation"] <= 1e-12
    assert set(extras["8"]["nested"]) == {"2", "4"}
    assert [p["parameter"] for p in summary["result"]["points"]] == [4, 8]
    assert result.fit is None

    run_log = (directory / "run.log").read_text(encoding="utf-8").splitlines()
    assert len(run_log) == 16
    assert json.loads(run_log[0])["purpose"] == "corrector_0"


def test_one_dimensional_rve_reports_finite_side_oracle(tmp_path):
    result, _ = run_study(_config(tmp_path, d=1, sides=[16], N=6))
    oracle = result.extras["16"]["oracle"]
    law = ConductanceLaw()
    assert oracle["abar"] == pytest.approx(2.0 / 3.0)
    assert oracle["abar_L"] == pytest.approx(oracles.expected_abar_finite(law, 16))
    assert oracle["abar_L"] > oracle["abar"]
    assert math.isfinite(oracle["abar_L_z"])


def test_worker_count_does_not_change_outputs(tmp_path):
    _, one = run_study(_config(tmp_path / "one", workers=1))
    _, two = run_study(_config(tmp_path / "two", workers=2))
    assert one.name == two.name
    assert _read(one) == _read(two)


def test_resumed_study_matches_fresh_run(tmp_path):
    run_study(_config(tmp_path / "resumed", sides=[8], N=3, cache=True))
    _, resumed = run_study(_config(tmp_path / "resumed", sides=[8], N=5, cache=True))
    _, fresh = run_study(_config(tmp_path / "fresh", sides=[8], N=5, cache=False))
    assert (tmp_path / "resumed" / "cache").exists()
    assert not (tmp_path / "fresh" / "cache").exists()
    assert _read(resumed) == _read(fresh)


def test_clt_with_degenerate_law_has_no_fluctuations(tmp_path):
    config = _config(tmp_path, kind="clt", sides=[8], N=3, abar_ref="per_realization",
                     law=ConductanceLaw.two_point(0.7, 0.7, 0.5))
    result, _ = run_study(config)
    for name in ("J0", "J1", "J2", "J0_own"):
        assert abs(result.extras["8"][name]["variance"]) <= 1e-20


def test_pathwise_identity_holds_in_study(tmp_path):
    config = _config(tmp_path, kind="pathwise", sides=[16], N=4, abar_ref="per_realization",
                     solver=SolveConfig(tol=1e-12, max_iterations=50000))
    result, directory = run_study(config)
    assert result.extras["16"]["max_pathwise_discrepancy"] <= 1e-8
    assert result.extras["16"]["e0_l2"] >= 0.0
    frame = pd.read_csv(directory / "study.csv")
    assert {"I1", "I2", "E0", "pathwise_discrepancy"} <= set(frame.columns)
    assert result.points[0].parameter == pytest.approx(1.0 / 16)


def test_pathwise_truncation_doubling(tmp_path):
    config = _config(tmp_path, kind="pathwise", sides=[8], N=4, abar_ref="per_realization",
                     truncation_doubling=True, solver=SolveConfig(tol=1e-12, max_iterations=50000))
    result, directory = run_study(config)
    truncation = result.extras["8"]["truncation"]
    assert (truncation["box"], truncation["doubled_box"]) == (1, 2)
    assert truncation["i1_variance"] == pytest.approx(result.extras["8"]["i1_variance"])
    assert truncation["i1_variance_doubled"] > 0.0
    assert math.isfinite(truncation["relative_change"])
    assert truncation["error_bar"] > 0.0
    assert truncation["flagged"] == (abs(truncation["relative_change"]) > truncation["error_bar"])
    assert isinstance(result.extras["truncation_flagged"], bool)
    assert result.extras["realized"]["8@box2"] == 4
    # study.csv 에는 설정한 상자의 행만
    assert set(pd.read_csv(directory / "study.csv")["parameter"]) == {8}


def test_pathwise_box_must_be_positive(tmp_path):
    with pytest.raises(ValueError):
        _config(tmp_path, kind="pathwise", sides=[8], box=0)


def test_green_kubo_study_compares_with_rve(tmp_path):
    config = _config(tmp_path, kind="gk", d=1, sides=[8], N=6, pilot_samples=4)
    result, _ = run_study(config)
    entry = result.extras["8"]
    assert entry["agreement"]["combined_error"] > 0.0
    assert entry["rve_same_torus"]["L"] == 16
    assert result.extras["abar_ref"]["mode"] == "pilot"


def test_normality_study(tmp_path):
    config = _config(tmp_path, kind="normality", d=1, sides=[16, 32], N=100)
    result, _ = run_study(config)
    assert [p.parameter for p in result.points] == [16, 32]
    assert all(0.0 < p.statistic < 1.0 for p in result.points)
    assert isinstance(result.extras["monotone_decreasing"], bool)


def test_moments_study(tmp_path):
    config = _config(tmp_path, kind="moments", sides=[4, 8], N=3)
    result, directory = run_study(config)
    assert result.extras["8"]["phi2"] > 0.0
    assert result.extras["8"]["sigma2"] > 0.0
    assert result.extras["8"]["grad_phi2"] > 0.0
    assert {"phi2", "grad_phi2", "sigma2"} <= set(pd.read_csv(directory / "study.csv").columns)

    ratio = result.extras["grad_phi2_ratio"]
    assert (ratio["L_min"], ratio["L_max"]) == (4, 8)
    assert math.isfinite(ratio["ratio"]) and ratio["ratio"] > 0.0
    assert ratio["ratio"] == pytest.approx(result.extras["8"]["grad_phi2"] / result.extras["4"]["grad_phi2"])
    assert ratio["bounded"] == (0.8 <= ratio["ratio"] <= 1.25)


def test_verify_writes_report(tmp_path):
    config = ExperimentConfig(kind="verify", d=2, master_seed=5, out=str(tmp_path),
                              verify=VerifyConfig(side=8, pairs=2, realizations=2, tolerance=1e-8))
    report, directory = run_verify(config)
    assert directory.name.startswith("verify_d2_L8_N2_")
    frame = pd.read_csv(directory / "study.csv")
    assert list(frame["name"]) == [c.name for c in report.checks]
    summary = json.loads((directory / "summary.json").read_text(encoding="utf-8"))
    assert summary["result"]["passed"] == report.passed


def test_main_exit_codes(tmp_path):
    log_file = str(tmp_path / "main.log")
    small = ["verify.side=8", "verify.pairs=2", "verify.realizations=2", "verify.tolerance=1e-8"]
    assert main("verify", overrides=small, out=str(tmp_path / "ok"), log_file=log_file) == EXIT_OK
    failing = small[:-1] + ["verify.tolerance=0"]
    assert main("verify", overrides=failing, out=str(tmp_path / "fail"), log_file=log_file) == EXIT_CHECK_FAILED
    assert main("rve", overrides=["solver.tol=-1"], log_file=log_file) == EXIT_CONFIG_ERROR
    assert main("rve", config_path=str(tmp_path / "missing.toml"), log_file=log_file) == EXIT_CONFIG_ERROR


@pytest.mark.slow
def test_green_kubo_agrees_with_rve_at_scale(tmp_path):
    config = _config(tmp_path, kind="gk", d=2, sides=[8, 16], N=400, abar_ref="pilot", workers=4)
    result, _ = run_study(config)
    for L in ("8", "16"):
        agreement = result.extras[L]["agreement"]
        assert abs(agreement["difference"]) <= 3.0 * agreement["combined_error"]
