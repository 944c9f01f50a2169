import json
import math
import os
from typing import Any, Dict, Optional

from pydantic import ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from poissonbalance.exceptions import InstanceFormatError

CONFIG_ENV_VAR = "PB_CONFIG"

_LOG_BASES = {"e": math.e, "2": 2.0, "10": 10.0}


class Settings(BaseSettings):
    # Numerics
    tail_tol: float = 1e-9
    log_base: str = "e"

    # Randomness
    seed: int = 0
    mc_trials: int = 1_000_000
    compare_trials: int = 100_000
    mc_streams: int = 4

    # Solver budgets
    config_limit: int = 10_000_000
    dp_state_budget: int = 100_000_000
    brute_force_max_jobs: int = 12
    brute_force_max_machines: int = 4

    # Worker settings
    workers: int = 4

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    model_config = SettingsConfigDict(
        env_prefix="PB_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("tail_tol")
    @classmethod
    def _check_tail_tol(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("tail_tol must lie in (0, 1)")
        return value

    @field_validator("log_base")
    @classmethod
    def _check_log_base(cls, value: str) -> str:
        if value not in _LOG_BASES:
            raise ValueError(f"log_base must be one of {sorted(_LOG_BASES)}")
        return value

    @field_validator("mc_trials", "compare_trials", "mc_streams", "workers",
                     "config_limit", "dp_state_budget")
    @classmethod
    def _check_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be a positive integer")
        return value

    @property
    def log_base_value(self) -> float:
        return _LOG_BASES[self.log_base]


def _read_config_document(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise InstanceFormatError(f"cannot read config document {path}: {e}")
    except json.JSONDecodeError as e:
        raise InstanceFormatError(f"config document {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise InstanceFormatError(f"config document {path} must be a JSON object")
    unknown = sorted(set(data) - set(Settings.model_fields))
    if unknown:
        raise InstanceFormatError(f"unknown keys in config document {path}: {', '.join(unknown)}")
    return data


def load_settings(config_path: Optional[str] = None, **overrides: Any) -> Settings:
    """
    Build settings with precedence flags > config document > environment > built-ins

    Args:
        config_path: Path to a JSON defaults document; falls back to $PB_CONFIG
        overrides: Values given on the command line (None values are ignored)
    """
    path = config_path or os.environ.get(CONFIG_ENV_VAR)
    values: Dict[str, Any] = _read_config_document(path) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return Settings(**values)
    except ValidationError as e:
        raise InstanceFormatError(f"invalid configuration: {e}")


settings = Settings()


def configure(config_path: Optional[str] = None, **overrides: Any) -> Settings:
    """Load settings as `load_settings` does and copy them onto the shared `settings` instance."""
    loaded = load_settings(config_path, **overrides)
    for name in Settings.model_fields:
        setattr(settings, name, getattr(loaded, name))
    return settings
