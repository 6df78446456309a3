"""Lab configuration: process settings and run-config loading."""
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Union

import yaml
from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.exceptions import ConfigError, raise_config_error
from app.schemas.config import (
    DESK_LEARNING_RATE,
    DESK_TEACHER_EPOCHS,
    DESK_TEACHER_LEARNING_RATE,
    Preset,
    RunConfig,
)


class Settings(BaseSettings):
    """Process-level settings read from EGAD_* environment variables."""

    model_config = SettingsConfigDict(env_prefix="EGAD_", env_file=".env", case_sensitive=True, extra="ignore")

    PROJECT_NAME: str = "EGAD Distillation Lab"
    VERSION: str = "1.0.0"
    LOG_LEVEL: str = "INFO"

    # Caps BLAS / internal parallelism; None leaves the library default
    THREADS: Optional[int] = None


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


PRESETS: Dict[Preset, Dict[str, Any]] = {
    Preset.PAPER: {},
    Preset.DESK: {
        "train.learning_rate": DESK_LEARNING_RATE,
        "teacher_train.learning_rate": DESK_TEACHER_LEARNING_RATE,
        "teacher_train.epochs": DESK_TEACHER_EPOCHS,
    },
}


def flatten_keys(document: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Flatten nested mappings into dotted keys (``{"a": {"b": 1}} -> {"a.b": 1}``)."""
    flat: Dict[str, Any] = {}
    for key, value in document.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten_keys(value, prefix=f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def unflatten_keys(flat: Mapping[str, Any]) -> Dict[str, Any]:
    """Inverse of flatten_keys; a key that is both a leaf and a namespace is rejected."""
    nested: Dict[str, Any] = {}
    for dotted, value in flat.items():
        parts = dotted.split(".")
        node = nested
        for i, part in enumerate(parts[:-1]):
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise_config_error(".".join(parts[: i + 1]), "used both as a value and as a namespace")
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise_config_error(dotted, "used both as a value and as a namespace")
        node[parts[-1]] = value
    return nested


def parse_override(assignment: str) -> Dict[str, Any]:
    """Parse one ``key=value`` override; the value is read as a YAML scalar."""
    if "=" not in assignment:
        raise_config_error(assignment, "override must look like key=value")
    key, raw = assignment.split("=", 1)
    key = key.strip()
    if not key:
        raise_config_error(assignment, "override key is empty")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    return {key: value}


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a YAML config document into flat dotted keys."""
    path = Path(path)
    if not path.is_file():
        raise_config_error("--config", "file does not exist", str(path))
    try:
        document = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (yaml.YAMLError, UnicodeDecodeError) as e:
        raise ConfigError(
            message=f"Config file {path} could not be parsed",
            details={"key": "--config", "reason": str(e)[:200]}
        )
    if document is None:
        return {}
    if not isinstance(document, Mapping):
        raise_config_error("--config", "top level must be a mapping of keys", type(document).__name__)
    return flatten_keys(document)


def load_config(
    path: Optional[Union[str, Path]] = None,
    preset: Optional[Preset] = None,
    overrides: Iterable[str] = (),
) -> RunConfig:
    """Build a validated RunConfig.

    Precedence, lowest first: field defaults, preset, config file, overrides.

    Args:
        path: Optional YAML file of flat dotted keys.
        preset: Optional named preset.
        overrides: ``key=value`` strings.

    Returns:
        Validated RunConfig.

    Raises:
        ConfigError: On parse failure, unknown key or invariant violation,
            with the offending dotted key in ``details["key"]``.
    """
    flat: Dict[str, Any] = {}
    if preset is not None:
        flat.update(PRESETS[Preset(preset)])
    if path is not None:
        flat.update(read_config_file(path))
    for assignment in overrides:
        flat.update(parse_override(assignment))

    try:
        return RunConfig.model_validate(unflatten_keys(flat))
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigError(
            message=f"Invalid configuration at '{key}': {first['msg']}",
            details={
                "key": key,
                "reason": first["type"],
                "errors": [
                    {"key": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
                    for err in e.errors()
                ],
            }
        )
