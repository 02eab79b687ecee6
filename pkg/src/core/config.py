"""
Configuration
Pydantic models for framing, architecture, training and evaluation, plus the flat key=value loader
"""

import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError

logger = logging.getLogger(__name__)


class PoolingKind(str, Enum):
    """Global pooling at the end of the backbone"""
    GDC = "gdc"
    AVG = "avg"


class AttentionInit(str, Enum):
    """Initialisation of the attention projection"""
    KAIMING = "kaiming"
    ZERO = "zero"


class BottleneckSetting(BaseModel):
    """One inverted-bottleneck stage: expansion, output channels, repeats, first stride"""
    expansion: int = Field(..., ge=1)
    channels: int = Field(..., ge=1)
    repeats: int = Field(..., ge=1)
    stride: int = Field(..., ge=1, le=2)


class FramingConfig(BaseModel):
    """Signal framing shared by the log-Mel front end and the Wavegram"""
    model_config = ConfigDict(extra="forbid")

    sample_rate: int = Field(16000, gt=0, description="Clip sample rate in Hz")
    clip_seconds: float = Field(10.0, gt=0, description="Clip length; shorter clips are padded, longer truncated")
    win_ms: float = Field(64.0, gt=0, description="Analysis window length in milliseconds")
    overlap: float = Field(0.5, ge=0.0, lt=1.0, description="Fractional overlap between frames")
    n_mels: int = Field(128, ge=2, description="Number of mel bins (f)")
    f_min: float = Field(0.0, ge=0.0, description="Lowest filterbank frequency in Hz")
    f_max: Optional[float] = Field(None, gt=0.0, description="Highest filterbank frequency in Hz (Nyquist when unset)")
    amplitude_floor: float = Field(1e-10, gt=0.0, description="Magnitude floor before the log")

    @model_validator(mode="after")
    def _check_ranges(self) -> "FramingConfig":
        nyquist = self.sample_rate / 2
        if self.f_max is not None and self.f_max > nyquist:
            raise ValueError(f"f_max must not exceed the Nyquist frequency {nyquist}")
        if self.f_min >= self.max_frequency:
            raise ValueError("f_min must be below f_max")
        if self.win_length < 2:
            raise ValueError("win_ms too short for the sample rate")
        if self.hop_length < 1:
            raise ValueError("overlap leaves no hop between frames")
        return self

    @property
    def max_frequency(self) -> float:
        return self.f_max if self.f_max is not None else self.sample_rate / 2

    @property
    def win_length(self) -> int:
        return int(round(self.sample_rate * self.win_ms / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.win_length * (1.0 - self.overlap)))

    @property
    def fft_size(self) -> int:
        return self.win_length

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.clip_seconds))

    @property
    def n_frames(self) -> int:
        padded = self.n_samples + 2 * (self.win_length // 2)
        return (padded - self.win_length) // self.hop_length + 1


class ModelConfig(BaseModel):
    """Architecture, including the feature/ablation switches"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    embedding_dim: int = Field(128, ge=1, alias="h", description="Embedding dimensionality h")
    n_classes: int = Field(41, ge=2, description="Number of (machine type, machine ID) classes")
    wavegram_multiplier: int = Field(128, ge=1, description="Depthwise channel multiplier of the Wavegram")
    stem_channels: int = Field(64, ge=1, description="Width of the separable stem")
    bottlenecks: str = Field(
        "2:64:5:2,4:128:1:2,2:128:3:1,4:128:1:2,2:128:2:1",
        description="Inverted-bottleneck stages as expansion:channels:repeats:stride",
    )
    tail_channels: int = Field(256, ge=1, description="Width of the 1×1 expansion before pooling")
    global_pooling: PoolingKind = Field(PoolingKind.GDC, description="gdc or avg")
    attention_filters: str = Field("16,64", description="Filters of the two separable attention blocks")
    attention_init: AttentionInit = Field(AttentionInit.KAIMING, description="kaiming or zero projection init")
    bn_momentum: float = Field(0.1, gt=0.0, le=1.0, description="Running-statistics momentum")
    use_mel: bool = Field(True, description="Include the log-Mel channel")
    use_wavegram: bool = Field(True, description="Include the Wavegram channel")
    use_attention: bool = Field(True, description="Apply the attention module")
    use_separable: bool = Field(True, description="Separable (true) or dense (false) 3×3 convolutions")

    @field_validator("bottlenecks")
    @classmethod
    def _parse_bottlenecks(cls, value: str) -> str:
        cls.parse_bottlenecks(value)
        return value

    @field_validator("attention_filters")
    @classmethod
    def _parse_filters(cls, value: str) -> str:
        filters = [int(v) for v in value.split(",") if v.strip()]
        if len(filters) != 2 or min(filters) < 1:
            raise ValueError("attention_filters needs two positive integers")
        return value

    @model_validator(mode="after")
    def _check_channels(self) -> "ModelConfig":
        if not (self.use_mel or self.use_wavegram):
            raise ValueError("at least one of use_mel/use_wavegram must be enabled")
        return self

    @staticmethod
    def parse_bottlenecks(value: str) -> List[BottleneckSetting]:
        settings = []
        for chunk in value.split(","):
            parts = chunk.strip().split(":")
            if len(parts) != 4:
                raise ValueError(f"bottleneck stage '{chunk}' is not expansion:channels:repeats:stride")
            t, c, n, s = (int(p) for p in parts)
            settings.append(BottleneckSetting(expansion=t, channels=c, repeats=n, stride=s))
        if not settings:
            raise ValueError("at least one bottleneck stage is required")
        return settings

    @property
    def bottleneck_settings(self) -> List[BottleneckSetting]:
        return self.parse_bottlenecks(self.bottlenecks)

    @property
    def attention_widths(self) -> Tuple[int, int]:
        first, second = (int(v) for v in self.attention_filters.split(","))
        return first, second

    @property
    def feature_channels(self) -> int:
        return int(self.use_mel) + int(self.use_wavegram)


class TrainConfig(BaseModel):
    """Optimisation and loss hyperparameters"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    alpha: float = Field(0.2, gt=0.0, description="Mixup Beta(alpha, alpha) parameter")
    margin: float = Field(0.7, ge=0.0, description="ArcFace angular margin m (radians)")
    scale: float = Field(40.0, gt=0.0, description="ArcFace scale s")
    lr: float = Field(1e-4, ge=0.0, description="AdamW learning rate")
    epochs: int = Field(300, ge=1)
    batch_size: int = Field(64, ge=2, alias="batch", description="Mini-batch size (mixup needs pairs)")
    weight_decay: float = Field(0.01, ge=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    seed: int = Field(0, ge=0)

    @field_validator("margin")
    @classmethod
    def _margin_below_right_angle(cls, value: float) -> float:
        if value >= math.pi / 2:
            raise ValueError("margin must be below pi/2")
        return value


class EvaluationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_fpr: float = Field(0.1, gt=0.0, le=1.0, description="Upper FPR bound p for pAUC")


class AsdConfig(BaseModel):
    """Complete run configuration"""
    model_config = ConfigDict(extra="forbid")

    framing: FramingConfig = Field(default_factory=FramingConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)

    def snapshot(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    @classmethod
    def from_snapshot(cls, data: Dict[str, Any]) -> "AsdConfig":
        return cls.model_validate(data)


_SECTIONS: Dict[str, type] = {
    "framing": FramingConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "evaluation": EvaluationConfig,
}


def _key_index() -> Dict[str, Tuple[str, str]]:
    """Flat key (field name or alias) -> (section, field name)"""
    index: Dict[str, Tuple[str, str]] = {}
    for section, model in _SECTIONS.items():
        for field_name, info in model.model_fields.items():
            index[field_name] = (section, field_name)
            if info.alias:
                index[info.alias] = (section, field_name)
    return index


def parse_config_text(text: str) -> AsdConfig:
    """
    Parse flat key=value text.

    Raises:
        ConfigError: Unknown or duplicate key, malformed line, or invalid value
    """
    index = _key_index()
    values: Dict[str, Dict[str, Any]] = {name: {} for name in _SECTIONS}
    seen: Dict[str, int] = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no} is not key=value", key="", line=line_no)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in index:
            raise ConfigError(f"unknown config key '{key}'", key=key, line=line_no)
        section, field_name = index[key]
        if field_name in seen:
            raise ConfigError(f"duplicate config key '{key}'", key=key, line=line_no)
        seen[field_name] = line_no
        values[section][field_name] = value if value != "" else None

    try:
        sections = {name: _SECTIONS[name](**fields) for name, fields in values.items()}
    except ValidationError as exc:
        raise _as_config_error(exc) from exc
    return AsdConfig(**sections)


def _as_config_error(exc: ValidationError) -> ConfigError:
    first = exc.errors()[0]
    key = str(first["loc"][-1]) if first.get("loc") else ""
    return ConfigError(f"invalid value for '{key}': {first['msg']}", key=key)


def load_config(path: Optional[Union[str, Path]] = None) -> AsdConfig:
    """
    Load a key=value config file; missing keys keep their defaults.

    Args:
        path: Config file, or None for the full default configuration
    """
    if path is None:
        return AsdConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", key="", path=str(path))
    config = parse_config_text(path.read_text(encoding="utf-8"))
    logger.info(f"Loaded configuration from {path}")
    return config


def dump_config(config: AsdConfig) -> str:
    """Render the flat key=value form accepted by parse_config_text"""
    lines = []
    for section in _SECTIONS:
        lines.append(f"# {section}")
        for key, value in getattr(config, section).model_dump(mode="json").items():
            lines.append(f"{key}={'' if value is None else value}")
    return "\n".join(lines) + "\n"


class RuntimeSettings(BaseSettings):
    """Process-level settings from the environment (ASD_*) or .env"""
    model_config = SettingsConfigDict(env_prefix="ASD_", env_file=".env", extra="ignore")

    log_level: str = Field("INFO", description="Root log level")
    log_dir: Optional[str] = Field("logs", description="Directory for asd.log; empty disables the file handler")
    json_logs: bool = Field(False, description="Emit JSON log lines")
