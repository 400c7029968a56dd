import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from pydantic import ValidationError

from app.models.experiment import ExperimentConfig
from app.settings import SRC_LOG_LEVELS
from app.utils.exceptions import ConfigError

logger = logging.getLogger(__name__)
logger.setLevel(SRC_LOG_LEVELS["CONFIG"])


def parse_value(text: str) -> Any:
    """
    --set 값을 TOML 리터럴로 해석합니다 (예: 1e-8, [8, 16], true, "abc").
    리터럴이 아니면 앞뒤 공백을 뺀 문자열 그대로 돌려줍니다.
    """
    text = text.strip()
    if not text:
        return ""
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text


def parse_override(item: str) -> tuple:
    """
    "solver.tol=1e-8" → (["solver", "tol"], 1e-8)

    Raises:
        ConfigError: key=value 형식이 아닐 때
    """
    if "=" not in item:
        raise ConfigError([f"--set 형식 오류 (key=value 필요): {item!r}"])
    key, value = item.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError([f"--set 키가 비어 있습니다: {item!r}"])
    return path, parse_value(value)


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """점 경로 덮어쓰기를 순서대로 적용한 새 딕셔너리"""
    merged = _deep_copy(data)
    for item in overrides:
        path, value = parse_override(item)
        node = merged
        for part in path[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[path[-1]] = value
        logger.debug(f"설정 덮어쓰기: {'.'.join(path)} = {value!r}")
    return merged


def _deep_copy(data: Dict[str, Any]) -> Dict[str, Any]:
    return {k: _deep_copy(v) if isinstance(v, dict) else v for k, v in data.items()}


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    TOML 설정 파일을 읽습니다.

    Raises:
        ConfigError: 파일이 없거나 TOML 문법 오류
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"설정 파일이 없습니다: {path}"])
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError([f"{path}: TOML 문법 오류: {e}"]) from e


def format_validation_error(error: ValidationError) -> List[str]:
    """필드별 메시지 목록 (예: "solver.tol: Input should be greater than 0")"""
    messages = []
    for item in error.errors():
        location = ".".join(str(p) for p in item.get("loc", ())) or "<root>"
        messages.append(f"{location}: {item.get('msg', '')}")
    return messages


def load_experiment_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = (),
                           **explicit: Any) -> ExperimentConfig:
    """
    설정 파일 → --set 덮어쓰기 → 전용 플래그 (--seed, --workers, --out) 순으로 합쳐 검증합니다.

    Args:
        path: TOML 설정 파일 경로 (없으면 기본값)
        overrides: "key=value" 목록
        **explicit: 값이 None 이 아닌 것만 적용 (예: kind, master_seed, workers, out)

    Raises:
        ConfigError: 파일/형식/검증 오류 (필드별 메시지 포함)
    """
    data = read_config_file(path) if path else {}
    data = apply_overrides(data, overrides)
    data.update({k: v for k, v in explicit.items() if v is not None})
    try:
        config = ExperimentConfig(**data)
    except ValidationError as e:
        messages = format_validation_error(e)
        for message in messages:
            logger.error(f"설정 오류: {message}")
        raise ConfigError(messages, detail=e.errors(include_url=False)) from e
    except TypeError as e:
        raise ConfigError([str(e)]) from e
    logger.info(f"설정 로드 완료: kind={config.kind}, d={config.d}, sides={config.sides}, N={config.N}")
    return config
