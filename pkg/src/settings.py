"""Run configuration: pydantic settings models, TOML loading and env defaults."""

import os
from pathlib import Path
from typing import Any, Literal, Optional

import tomlkit
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, FilePath, ValidationError, model_validator

from src.errors import ConfigError
from src.logging_config import logger

load_dotenv()

DEFAULT_THREADS = int(os.getenv("TEMPOGRAPH_THREADS", "1"))
ONE_HOT_MAX_NODES = 2048


class SamplingSettings(BaseModel):
    """Ego-graph and initial-node sampling parameters."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    k: int = Field(2, ge=1)
    th: Optional[int] = Field(10, ge=1)  # None disables truncation
    n_s: int = Field(64, ge=1)
    strategy: Literal["degree", "uniform"] = "degree"
    t_n: int = Field(1, ge=0)


class VariantFlags(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    walk: bool = False
    no_truncation: bool = False
    uniform_init: bool = False
    non_probabilistic: bool = False

    @model_validator(mode="after")
    def _exclusive_truncation(self):
        if self.walk and self.no_truncation:
            raise ValueError("walk and no_truncation variants are mutually exclusive")
        return self


class ModelSettings(BaseModel):
    """Architecture hyperparameters of the autoencoder."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    k: int = Field(2, ge=1)
    th: int = Field(10, ge=1)
    n_s: int = Field(64, ge=1)
    t_n: int = Field(1, ge=0)
    d_n: Optional[int] = Field(None, ge=1)
    d_in: int = Field(64, ge=1)
    d_enc: int = Field(32, ge=1)
    d_att: Optional[int] = Field(None, ge=1)
    d_lat: int = Field(32, ge=1)
    h_tga: int = Field(4, ge=1)
    activation: Literal["elu", "relu", "tanh", "identity"] = "elu"
    one_hot: bool = False
    literal_double_add: bool = True

    @model_validator(mode="after")
    def _attention_width(self):
        if self.d_att is not None and self.d_att != self.d_lat:
            raise ValueError(f"d_att ({self.d_att}) must equal d_lat ({self.d_lat})")
        return self

    @property
    def candidate_radius(self) -> int:
        return self.d_n if self.d_n is not None else self.k

    def sampling(self, variant: VariantFlags) -> SamplingSettings:
        """Sampling parameters after applying the variant flags."""
        th: Optional[int] = self.th
        if variant.walk:
            th = 1
        elif variant.no_truncation:
            th = None
        return SamplingSettings(
            k=self.k,
            th=th,
            n_s=self.n_s,
            strategy="uniform" if variant.uniform_init else "degree",
            t_n=self.t_n,
        )


class TrainSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(100, ge=1)
    lr: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    kl_weight: float = Field(1.0, ge=0)
    progress: bool = False


class GenerateSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    passes: int = Field(1, ge=1)
    samples: int = Field(10, ge=1)
    widen: bool = False
    batch_size: int = Field(256, ge=1)


class EvaluateSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    delta: Optional[int] = Field(None, ge=0)
    sigma_k: float = Field(1.0, gt=0)


class RunConfig(BaseModel):
    """Everything one pipeline run needs; archived next to its outputs."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    dataset: FilePath
    binning: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)
    out_dir: Path = Path("runs/default")
    threads: int = Field(DEFAULT_THREADS, ge=1)
    model: ModelSettings = ModelSettings()
    variant: VariantFlags = VariantFlags()
    train: TrainSettings = TrainSettings()
    generate: GenerateSettings = GenerateSettings()
    evaluate: EvaluateSettings = EvaluateSettings()


def _merge(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            merged[key] = _merge(merged.get(key, {}) or {}, value)
        else:
            merged[key] = value
    return merged


def load_run_config(path: Optional[Path], overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Reads a TOML run config and applies flag overrides (flags win)."""
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            logger.error("Config file %s does not exist", path)
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomlkit.parse(path.read_text(encoding="utf-8")).unwrap()
        except tomlkit.exceptions.ParseError as e:
            logger.error("Config file %s is not valid TOML: %s", path, e)
            raise ConfigError(f"invalid TOML in {path}: {e}") from e
    data = _merge(data, overrides or {})
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        logger.error("Invalid run configuration: %s", e)
        raise ConfigError(_describe(e)) from e
    logger.info("Run configuration resolved (dataset=%s, seed=%s)", config.dataset, config.seed)
    return config


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"])
        detail = item["msg"]
        if item["type"].startswith("path_not_file") or item["type"] == "path_not_exists":
            detail = f"{detail}: {item.get('input')}"
        parts.append(f"{location}: {detail}")
    return "; ".join(parts)


def dump_run_config(config: RunConfig) -> str:
    """Serializes the resolved config as TOML (None fields omitted)."""
    payload = config.model_dump(mode="json", exclude_none=True)
    return tomlkit.dumps(payload)
