"""
명령 실행 진입점 (설정 로드, 스터디/검사 분기, 종료 코드)

종료 코드
- 0: 성공 (verify 는 모든 검사 통과)
- 1: verify 검사 실패
- 2: 설정 오류 (ConfigError)
- 3: 실행 중 도메인 예외 (HomogenizationError)
"""
import logging
from pathlib import Path
from typing import Optional, Sequence

from app.models.experiment import VerifyReport
from app.models.stats import StudyResult
from app.services.studies import run_study, run_verify
from app.settings import SRC_LOG_LEVELS, settings
from app.utils.config_utils import load_experiment_config
from app.utils.exceptions import ConfigError, HomogenizationError
from app.utils.logger import start_logger

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["MAIN"])

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


def format_verify_report(report: VerifyReport) -> str:
    lines = [f"identity checks (d={report.d}, L={report.side}, tolerance={report.tolerance:g})"]
    width = max((len(c.name) for c in report.checks), default=10)
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        lines.append(f"  {status}  {check.name:<{width}}  {check.discrepancy:.3e}  (<= {check.threshold:.1e})"
                     + (f"  {check.detail}" if check.detail else ""))
    lines.append("all checks passed" if report.passed else f"{len(report.failures)} check(s) failed")
    return "\n".join(lines)


def format_study_result(result: StudyResult, directory: Path) -> str:
    lines = [f"{result.kind} study -> {directory}"]
    for point in result.points:
        lines.append(f"  {point.parameter:<10g} {point.statistic:.6e} ± {point.error:.2e}")
    if result.fit is not None:
        low, high = result.fit.confidence
        lines.append(f"  slope {result.fit.slope:.4f} ± {result.fit.slope_se:.2e}  [{low:.4f}, {high:.4f}]"
                     f"  (correction: {result.fit.correction.kind})")
    return "\n".join(lines)


def main(kind: str, config_path: Optional[str] = None, overrides: Sequence[str] = (),
         seed: Optional[int] = None, workers: Optional[int] = None, out: Optional[str] = None,
         log_file: Optional[str] = None) -> int:
    """
    하위 명령 하나를 실행하고 종료 코드를 돌려줍니다.

    Args:
        kind: verify | rve | gk | clt | pathwise | normality | moments
        config_path: TOML 설정 파일
        overrides: --set key=value 목록
        seed, workers, out: 전용 플래그 (설정 파일과 --set 보다 우선)
        log_file: loguru 파일 핸들러 경로 (None 이면 기본값)
    """
    if log_file:
        start_logger(log_file)
    else:
        start_logger()
    logger.info(f"{settings.APP_NAME}: {kind}")

    try:
        config = load_experiment_config(config_path, overrides, kind=kind, master_seed=seed,
                                        workers=workers, out=out)
    except ConfigError as e:
        for message in e.messages:
            print(f"config error: {message}")
        return EXIT_CONFIG_ERROR

    try:
        if config.kind == "verify":
            report, directory = run_verify(config)
            print(format_verify_report(report))
            print(f"report -> {directory}")
            return EXIT_OK if report.passed else EXIT_CHECK_FAILED

        result, directory = run_study(config)
        print(format_study_result(result, directory))
        return EXIT_OK
    except HomogenizationError as e:
        logger.error(f"실행 실패: {type(e).__name__}: {e}")
        print(f"error: {type(e).__name__}: {e}")
        return EXIT_RUNTIME_ERROR
