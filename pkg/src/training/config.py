"""Per-stage training configuration, loadable from JSON and overridable by CLI flags."""
import json
import logging
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.config import DEFAULT_BATCH, DEFAULT_CROP, STAGE_ALIASES, STAGE_DEFAULTS
from src.models.config import CpgaConfig
from src.training.losses import LossWeights

logger = logging.getLogger(__name__)

Stage = Literal["selfsup", "supervised", "kd", "dgf"]


class TrainConfig(BaseModel):
    """One training stage. ``epochs`` and ``lr`` default per stage when left unset."""
    model_config = ConfigDict(extra="forbid")

    stage: Stage = "supervised"
    epochs: Optional[int] = Field(None, ge=1)
    lr: Optional[float] = Field(None, gt=0)
    batch: int = Field(DEFAULT_BATCH, ge=1)
    crop: Optional[int] = Field(DEFAULT_CROP, ge=8)
    weights: LossWeights = LossWeights()
    perceptual: bool = True
    seed: int = 0
    max_steps: Optional[int] = Field(None, ge=1)

    data: Optional[Path] = None
    val_data: Optional[Path] = None
    resume: Optional[Path] = None
    teacher: Optional[Path] = None
    output: Optional[Path] = None

    model: CpgaConfig = CpgaConfig()
    threads: Optional[int] = Field(None, ge=1)
    prefetch: int = Field(2, ge=1)

    @field_validator("stage", mode="before")
    @classmethod
    def _resolve_alias(cls, v):
        return STAGE_ALIASES.get(v, v) if isinstance(v, str) else v

    @model_validator(mode="after")
    def _stage_defaults(self) -> "TrainConfig":
        defaults = STAGE_DEFAULTS[self.stage]
        if self.epochs is None:
            self.epochs = defaults["epochs"]
        if self.lr is None:
            self.lr = defaults["lr"]
        return self

    @property
    def loss_weights(self) -> LossWeights:
        """Weights actually applied: perceptual term dropped when disabled."""
        if self.perceptual:
            return self.weights
        return self.weights.model_copy(update={"lambda_per": 0.0})

    @classmethod
    def load(cls, path: Union[str, Path], **overrides) -> "TrainConfig":
        """Read a JSON config file; non-None keyword overrides win over file values."""
        return cls.from_values(json.loads(Path(path).read_text()), **overrides)

    @classmethod
    def from_values(cls, base: Optional[dict] = None, **overrides) -> "TrainConfig":
        values = dict(base or {})
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.model_validate(values)
