"""
Configuration Management
Application settings from the environment plus the experiment configuration file format
"""

from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from a0c.exceptions import ConfigurationError


class Settings(BaseSettings):
    """Application settings from environment variables"""

    app_name: str = Field(default="A0C", alias="APP_NAME")
    app_version: str = Field(default="1.0.0", alias="APP_VERSION")
    debug: bool = Field(default=False, alias="DEBUG")

    threads: int = Field(default=1, ge=1, alias="A0C_THREADS")

    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    log_file: Optional[str] = Field(default="logs/a0c.log", alias="LOG_FILE")

    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=False,
        populate_by_name=True,
        extra="ignore",
    )


settings = Settings()


class ExperimentConfig(BaseModel):
    """
    Hyperparameters of one experiment.

    Defaults reproduce the Pendulum swing-up setup: c_puct=0.05, c_pw=1,
    kappa=0.5, tau=0.1, lambda=0.1, c_e=20, RMSProp lr 1e-4 on batches of 32,
    300-step episodes, 10 repetitions.
    """

    c_puct: float = Field(default=0.05, gt=0)
    c_pw: float = Field(default=1.0, gt=0)
    kappa: float = Field(default=0.5, gt=0, lt=1)
    tau: float = Field(default=0.1, gt=0)
    lambda_: float = Field(default=0.1, gt=0, alias="lambda")
    c_e: float = Field(default=20.0, gt=0)
    n_trace: int = Field(default=10, ge=1)
    gamma: float = Field(default=1.0, ge=0, le=1)
    c_b: float = Field(default=2.0, gt=0)
    horizon: int = Field(default=300, ge=1)
    lr: float = Field(default=1e-4, gt=0)
    batch: int = Field(default=32, ge=1)
    buffer_capacity: int = Field(default=25_000, ge=1)
    repetitions: int = Field(default=10, ge=1)
    budget_steps: int = Field(default=150_000, ge=1)
    budget_seconds: Optional[float] = Field(default=None, gt=0)
    max_episodes: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0)

    hidden_units: int = Field(default=128, ge=1)
    hidden_layers: int = Field(default=3, ge=1)
    rmsprop_rho: float = Field(default=0.9, gt=0, lt=1)
    rmsprop_eps: float = Field(default=1e-8, gt=0)

    value_target: Literal["max", "mean"] = "max"
    policy_baseline: Literal["mean", "none"] = "mean"
    record_wall_time: bool = False

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    @field_validator("budget_seconds", "max_episodes", mode="before")
    @classmethod
    def _none_marker(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in ("", "none", "null"):
            return None
        return value

    def file_keys(self) -> Dict[str, Any]:
        """Values keyed by their configuration-file names"""
        return self.model_dump(by_alias=True)


def _key_of(error: Dict[str, Any]) -> str:
    loc = error.get("loc") or ("?",)
    key = str(loc[0])
    return "lambda" if key == "lambda_" else key


def _read_config_file(path: Path) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {number}", f"expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"line {number}", "empty key")
        values[key] = value
    return values


def parse_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """
    Build an ExperimentConfig from a flat ``key = value`` file.

    Args:
        path: Configuration file; None requests all defaults
        overrides: Values taking precedence over the file (CLI flags)

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigurationError: malformed line, unknown key or invariant violation
    """
    values: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError("config", f"file not found: {path}")
        values.update(_read_config_file(path))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    known = {field.alias or name for name, field in ExperimentConfig.model_fields.items()}
    for key in values:
        if key not in known:
            raise ConfigurationError(key, "unknown key")

    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigurationError(_key_of(first), first.get("msg")) from exc


def format_config(config: ExperimentConfig) -> str:
    """Render a config in the same key = value format parse_config reads"""
    lines = []
    for key, value in config.file_keys().items():
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
