from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from typing import Literal, Optional, Any
from pathlib import Path
import json
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .exceptions import ConfigError


class Settings(BaseSettings):
    """Process-level settings, read from the environment and an optional .env file."""

    # Worker parallelism for multi-seed runs and evaluation
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)

    # Logging
    log_level: str = "INFO"
    log_json: bool = False

    # tqdm progress bars
    progress: bool = False

    model_config = SettingsConfigDict(
        env_prefix="HYPERWAVE_",
        env_file=".env",
        extra="ignore",  # Ignore extra environment variables
    )


settings = Settings()


# Run configuration sections. Every section rejects unknown keys.

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SyntheticConfig(_Section):
    users: int = Field(2000, ge=1)
    items: int = Field(1000, ge=1)
    user_groups: int = Field(4, ge=1)
    genres: int = Field(4, ge=1)
    cross_rate: float = Field(0.3, ge=0.0, le=1.0)
    per_user: int = Field(20, ge=1)
    seed: int = 0


class DataConfig(_Section):
    interactions: Optional[str] = None
    synthetic: Optional[SyntheticConfig] = None
    split_ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    split_seed: int = 0

    @field_validator("split_ratios")
    @classmethod
    def _ratios_are_a_partition(cls, v):
        if any(r <= 0 for r in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("split_ratios must be positive and sum to 1")
        return v


class TextConfig(_Section):
    enabled: bool = True
    path_users: Optional[str] = None
    path_items: Optional[str] = None
    synth: bool = False  # fall back to seeded pseudo-random matrices
    synth_dim: int = Field(16, ge=1)
    synth_seed: int = 0


class ModelConfig(_Section):
    dim: int = Field(32, ge=1)


class HdnnConfig(_Section):
    enabled: bool = True
    layers: int = Field(3, ge=1)


class WaveletConfig(_Section):
    enabled: bool = True
    layers: int = Field(3, ge=1)
    scale: float = Field(1.0, gt=0.0)
    combine: Literal["add", "concat"] = "add"
    mode: Literal["exact", "chebyshev", "auto"] = "auto"
    cheb_order: int = Field(10, ge=1)
    share_filter: bool = False


class SpectralConfig(_Section):
    max_exact_n: int = Field(5000, ge=1)


class FusionConfig(_Section):
    enabled: bool = True
    late: Literal["mean", "learned_scalar"] = "mean"


class TrainConfig(_Section):
    lr: float = Field(1e-3, gt=0.0)
    beta1: float = Field(0.9, gt=0.0, lt=1.0)
    beta2: float = Field(0.999, gt=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    ssl_weight: float = Field(0.1, ge=0.0)
    reg_weight: float = Field(1e-4, ge=0.0)
    temperature: float = Field(0.2, gt=0.0)
    ssl_reduction: Literal["mean", "sum"] = "mean"  # over the batch rows of each layer pair
    contrastive: bool = True
    epochs: int = Field(30, ge=0)
    batch_size: int = Field(2048, ge=1)
    patience: int = Field(10, ge=1)
    seed: int = 0


class EvalConfig(_Section):
    ks: list[int] = Field(default_factory=lambda: [10, 20, 40])
    val_k: int = Field(20, ge=1)

    @field_validator("ks")
    @classmethod
    def _positive_ks(cls, v):
        if not v or any(k < 1 for k in v):
            raise ValueError("ks must be a non-empty list of positive integers")
        return sorted(set(v))


class RunSection(_Section):
    seeds: list[int] = Field(default_factory=lambda: [0])
    output_dir: str = "runs/default"


class RunConfig(_Section):
    """The single config document every command reads."""

    data: DataConfig = Field(default_factory=DataConfig)
    text: TextConfig = Field(default_factory=TextConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    hdnn: HdnnConfig = Field(default_factory=HdnnConfig)
    wavelet: WaveletConfig = Field(default_factory=WaveletConfig)
    spectral: SpectralConfig = Field(default_factory=SpectralConfig)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    run: RunSection = Field(default_factory=RunSection)

    @model_validator(mode="after")
    def _at_least_one_encoder(self):
        if not self.hdnn.enabled and not self.wavelet.enabled:
            raise ValueError("at least one of hdnn / wavelet must be enabled")
        return self

    def with_override(self, dotted_key: str, value: Any) -> "RunConfig":
        """Return a validated copy with one ``section.key`` replaced."""
        section, _, key = dotted_key.partition(".")
        if not key or section not in type(self).model_fields:
            raise ConfigError(f"Unknown config key: {dotted_key}")
        section_model = getattr(self, section)
        if key not in type(section_model).model_fields:
            raise ConfigError(f"Unknown config key: {dotted_key}")
        data = self.model_dump()
        data[section][key] = value
        return parse_run_config(data)

    def echo(self) -> str:
        """Canonical JSON of the fully resolved config."""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2)


def parse_run_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"Invalid config at '{where}': {first['msg']}") from e


def load_run_config(path: str | Path) -> RunConfig:
    """Load a TOML run config; absent keys take their defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with path.open("rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid TOML: {e}") from e
    return parse_run_config(data)
