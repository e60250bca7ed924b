from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional, List, Tuple
from enum import Enum
import math


class TrainMode(str, Enum):
    MULTI_DOMAIN = "multi_domain"
    PER_DATASET = "per_dataset"


class MemoryStrategy(str, Enum):
    NONE = "none"
    FROZEN = "frozen"
    OWN_DOMAIN = "own_domain"
    DATA_DRIVEN = "data_driven"


class MemoryMode(str, Enum):
    TRAIN = "train"
    INFER = "infer"


class BufferShape(str, Enum):
    LINEAR = "linear"
    SQRT = "sqrt"


class MetricKind(str, Enum):
    ROC = "roc"
    PR = "pr"


class SynthKind(str, Enum):
    SINE = "sine"
    SAWTOOTH = "sawtooth"
    AR_NOISE = "ar_noise"


class AnomalyKind(str, Enum):
    SPIKE = "spike"
    LEVEL_SHIFT = "level_shift"
    FREQUENCY_CHANGE = "frequency_change"


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    window: int = Field(512, ge=1)
    patch_len: int = Field(8, ge=1)
    n_patches: int = Field(64, ge=1)
    d_model: int = Field(64, ge=1)
    d_ff: int = Field(128, ge=1)
    n_layers: int = Field(2, ge=0)
    n_heads: int = Field(4, ge=1)
    d_hidden: int = Field(128, ge=1)

    @model_validator(mode="after")
    def check_shapes(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.window > self.patch_len * self.n_patches:
            raise ValueError("window must not exceed patch_len * n_patches")
        return self


class TrainConfig(ModelConfig):
    mode: TrainMode = TrainMode.MULTI_DOMAIN
    lr: float = 1e-4
    epochs: int = 2
    batch_size: int = Field(16, ge=1)
    seed: int = 42
    train_ratio: float = 1.0
    memory_strategy: MemoryStrategy = MemoryStrategy.DATA_DRIVEN
    encoder_init: str = "scratch"
    k: Optional[int] = Field(None, ge=1)
    tau_select: float = 0.3
    tau_attn: float = 1.0
    n_items: Optional[int] = Field(None, ge=1)
    renormalize_topk: bool = False
    samples_per_domain: int = Field(8, ge=1)
    pretrain_mask_ratio: float = Field(0.3, ge=0.0, lt=1.0)
    std_eps: float = Field(1e-8, gt=0.0)
    log_every: int = Field(10, ge=1)

    @field_validator("lr")
    @classmethod
    def check_lr(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("lr must be positive")
        return value

    @field_validator("epochs")
    @classmethod
    def check_epochs(cls, value: int) -> int:
        if value < 1:
            raise ValueError("epochs must be at least 1")
        return value

    @field_validator("train_ratio")
    @classmethod
    def check_ratio(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError("train_ratio must lie in (0, 1]")
        return value

    @field_validator("tau_select", "tau_attn")
    @classmethod
    def check_tau(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("temperature must be positive")
        return value

    @property
    def uses_memory(self) -> bool:
        return self.memory_strategy != MemoryStrategy.NONE

    def model_part(self) -> ModelConfig:
        return ModelConfig(**{name: getattr(self, name) for name in ModelConfig.model_fields})

    def train_part(self) -> "TrainConfig":
        return TrainConfig(**{name: getattr(self, name) for name in TrainConfig.model_fields})


class MetricConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    buffer_shape: BufferShape = BufferShape.LINEAR
    ell_max: Optional[int] = Field(None, ge=0)
    min_ell_max: int = Field(4, ge=0)


class RunConfig(TrainConfig, MetricConfig):
    model_config = ConfigDict(extra="forbid")

    data_dir: Optional[str] = None
    out_dir: Optional[str] = None

    def metric_part(self) -> MetricConfig:
        return MetricConfig(**{name: getattr(self, name) for name in MetricConfig.model_fields})


class AnomalyPlan(BaseModel):
    start: int = Field(..., ge=0)
    length: int = Field(..., ge=1)
    kind: AnomalyKind

    @property
    def end(self) -> int:
        return self.start + self.length


class SynthSpec(BaseModel):
    kind: SynthKind
    length: int = Field(4096, ge=2)
    train_len: int = Field(2048, ge=1)
    period: int = Field(64, ge=2)
    noise_std: float = Field(0.1, ge=0.0)
    ar_phi: float = Field(0.9, gt=-1.0, lt=1.0)
    amplitude: float = 1.0
    anomalies: List[AnomalyPlan] = []
    seed: int = 0

    @property
    def subdomain(self) -> str:
        return "".join(part.capitalize() for part in self.kind.value.split("_"))


class SeriesMetrics(BaseModel):
    series_id: str
    dataset: str
    subdomain: str
    auc_pr: float = math.nan
    auc_roc: float = math.nan
    vus_pr: float = math.nan
    vus_roc: float = math.nan

    @property
    def domain(self) -> Tuple[str, str]:
        return (self.dataset, self.subdomain)


class DomainMetrics(BaseModel):
    dataset: str
    subdomain: str
    n_series: int
    auc_pr: float
    auc_roc: float
    vus_pr: float
    vus_roc: float


class EvalReport(BaseModel):
    series: List[SeriesMetrics]
    domains: List[DomainMetrics]
    corpus: DomainMetrics
    n_undefined: int = 0
