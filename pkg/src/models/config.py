"""Architecture configuration for CPGA-Net."""
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.config import (
    ABLATION_PRESETS,
    CBAM_REDUCTION,
    DGF_CHANNELS,
    DGF_DOWNSAMPLE,
    GAMMA_BOUNDS,
    PRIOR_ORDER,
    REGULAR_CHANNELS,
    T_MIN,
)
from src.imaging.guided_filter import GuidedFilterParams

TInput = Literal["none", "rgb", "priors"]
ANet = Literal["conv", "resblock"]
GNet = Literal["none", "resblock", "rescbam"]
Fusion = Literal["none", "iaaf"]


class CpgaConfig(BaseModel):
    """Widths, ranges and ablation switches of one network.

    ``base_channels`` is the Ã-branch width (16 regular, 8 for the DGF
    student); the other branches have their own widths.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    base_channels: int = Field(REGULAR_CHANNELS, ge=1)
    t_channels: int = Field(REGULAR_CHANNELS, ge=1)
    gamma_channels: int = Field(REGULAR_CHANNELS, ge=1)
    fusion_channels: int = Field(REGULAR_CHANNELS, ge=1)
    cbam_reduction: int = Field(CBAM_REDUCTION, ge=1)

    use_dgf: bool = False
    dgf_downsample: int = Field(DGF_DOWNSAMPLE, ge=1)
    guided_filter: GuidedFilterParams = GuidedFilterParams()

    t_min: float = T_MIN
    gamma_bounds: tuple[float, float] = GAMMA_BOUNDS

    t_input: TInput = "priors"
    a_net: ANet = "resblock"
    g_net: GNet = "rescbam"
    fusion: Fusion = "iaaf"

    @field_validator("t_min")
    @classmethod
    def _t_min_open_unit(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError(f"t_min must lie in (0, 1), got {v}")
        return v

    @field_validator("gamma_bounds")
    @classmethod
    def _gamma_bounds_ordered(cls, v: tuple[float, float]) -> tuple[float, float]:
        lo, hi = v
        if lo <= 0:
            raise ValueError(f"gamma lower bound must be > 0, got {lo}")
        if lo >= hi:
            raise ValueError(f"gamma bounds must satisfy lo < hi, got ({lo}, {hi})")
        return v

    @model_validator(mode="after")
    def _fusion_needs_gamma(self) -> "CpgaConfig":
        if self.fusion == "iaaf" and self.g_net == "none":
            raise ValueError("fusion 'iaaf' needs a gamma branch (g_net != 'none')")
        return self

    @property
    def prior_order(self) -> tuple[str, ...]:
        return PRIOR_ORDER

    @property
    def has_gamma(self) -> bool:
        return self.g_net != "none"

    @classmethod
    def dgf(cls, **overrides) -> "CpgaConfig":
        """The reduced-width student that runs at low resolution behind the guided filter."""
        values = {"base_channels": DGF_CHANNELS, "use_dgf": True, **overrides}
        return cls(**values)

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "CpgaConfig":
        """Config for one architecture-ablation row (``a`` .. ``j``)."""
        key = name.lower()
        if key not in ABLATION_PRESETS:
            raise ValueError(f"unknown ablation preset '{name}' (expected one of {sorted(ABLATION_PRESETS)})")
        return cls(**{**ABLATION_PRESETS[key], **overrides})
