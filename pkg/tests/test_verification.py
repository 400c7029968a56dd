import pytest

from app.models.experiment import ExperimentConfig, VerifyConfig
from app.services.verification import identity_verifier

CORE_CHECKS = {
    "summation_by_parts",
    "flux_corrector_skew",
    "flux_corrector_divergence",
    "helmholtz_gradient",
    "helmholtz_idempotent",
    "leray_idempotent",
    "leray_divergence_free",
    "leray_gradient_kernel",
    "constant_backend_agreement",
    "vertical_derivative",
    "pathwise_identity",
    "j1_helmholtz_relation",
    "j2_leray_relation",
    "q_commutator_form",
}


def _config(d=2, **verify):
    params = dict(side=8, pairs=4, realizations=2, tolerance=1e-8)
    params.update(verify)
    return ExperimentConfig(kind="verify", d=d, master_seed=17, verify=VerifyConfig(**params))


def test_small_two_dimensional_run_passes():
    report = identity_verifier.run(_config())
    names = {c.name for c in report.checks}
    assert CORE_CHECKS <= names
    assert report.passed, [(c.name, c.discrepancy, c.threshold, c.detail) for c in report.failures]
    assert report.side == 8


def test_one_dimensional_run_includes_closed_forms():
    report = identity_verifier.run(_config(d=1, side=16))
    names = {c.name for c in report.checks}
    assert {"oracle_abar", "oracle_corrector_gradient", "oracle_commutator",
            "oracle_solution", "oracle_i1"} <= names
    assert report.passed, [(c.name, c.discrepancy, c.threshold) for c in report.failures]


def test_single_realization_skips_q_comparison():
    report = identity_verifier.run(_config(realizations=1, pairs=2))
    assert "q_commutator_form" not in {c.name for c in report.checks}


def test_zero_tolerance_fails():
    report = identity_verifier.run(_config(tolerance=0.0))
    assert not report.passed
    assert report.failures


@pytest.mark.slow
def test_default_two_dimensional_run():
    report = identity_verifier.run(ExperimentConfig(kind="verify", d=2, master_seed=3))
    assert report.passed, [(c.name, c.discrepancy, c.threshold) for c in report.failures]
