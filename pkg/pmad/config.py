from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import ValidationError
from pathlib import Path
from typing import Any, Dict, Mapping, Optional
from enum import Enum
import structlog
from .exceptions import ConfigurationError
from .schemas import RunConfig

logger = structlog.get_logger()

RESOLVED_CONFIG_NAME = "resolved.conf"


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="PMAD_", env_file=".env", extra="ignore")

    threads: int = 1
    torch_threads: int = 1
    log_level: str = "INFO"


settings = Settings()

_OPTIONAL_KEYS = {name for name, field in RunConfig.model_fields.items() if field.default is None}


def parse_config_text(text: str, source: str = "<string>") -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"Expected 'key = value' at {source}:{lineno}", line=raw)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"Empty key at {source}:{lineno}")
        values[key] = value
    return values


def load_config_file(path: str) -> Dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigurationError(f"Cannot read config file {path}: {e}")
    return parse_config_text(text, source=path)


def resolve_run_config(
    config_path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Merge a key=value file with command-line overrides (overrides win)."""
    merged: Dict[str, Any] = load_config_file(config_path) if config_path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    unknown = sorted(set(merged) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigurationError(f"Unknown configuration keys: {', '.join(unknown)}", keys=unknown)

    cleaned = {key: (None if value in ("", "none", "None") and key in _OPTIONAL_KEYS else value)
               for key, value in merged.items()}
    try:
        return RunConfig(**cleaned)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}")


def format_config(config: RunConfig) -> str:
    lines = ["# resolved run configuration"]
    for key, value in config.model_dump().items():
        if isinstance(value, Enum):
            value = value.value
        lines.append(f"{key} = {'' if value is None else value}")
    return "\n".join(lines) + "\n"


def write_resolved_config(config: RunConfig, out_dir: str) -> Path:
    path = Path(out_dir) / RESOLVED_CONFIG_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_config(config))
    logger.info("Resolved config written", path=str(path))
    return path
