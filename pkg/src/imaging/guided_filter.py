"""Fast guided filter lifting a low-resolution result to full resolution."""
import logging

from pydantic import BaseModel, ConfigDict, Field

from src.config import GF_EPS, GF_RADIUS
from src.tensor import ops
from src.tensor.core import Tensor

logger = logging.getLogger(__name__)


class GuidedFilterParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    radius: int = Field(GF_RADIUS, ge=1)
    eps: float = Field(GF_EPS, gt=0)


def fast_guided_filter(
    guide_low: Tensor,
    src_low: Tensor,
    guide_full: Tensor,
    params: GuidedFilterParams = GuidedFilterParams(),
) -> Tensor:
    """Per-channel guided filter solved at low resolution, applied at full resolution.

    Each channel of ``src_low`` is regressed locally onto the same channel of
    ``guide_low`` (q = a*I + b over every window); the box-averaged a and b
    are bilinearly upsampled and applied to ``guide_full``. Built only from
    differentiable ops, so gradients reach ``src_low``.
    """
    for name, t in (("guide_low", guide_low), ("src_low", src_low), ("guide_full", guide_full)):
        if t.ndim != 3:
            raise ValueError(f"fast_guided_filter: {name} must be [C,H,W], got shape {t.shape}")
    if guide_low.shape[0] != src_low.shape[0] or guide_full.shape[0] != src_low.shape[0]:
        raise ValueError(
            f"fast_guided_filter: channel counts differ (guide_low={guide_low.shape[0]}, "
            f"src_low={src_low.shape[0]}, guide_full={guide_full.shape[0]})"
        )
    if guide_low.shape != src_low.shape:
        raise ValueError(f"fast_guided_filter: guide_low {guide_low.shape} and src_low {src_low.shape} differ")

    r = params.radius
    mean_i = ops.box_filter(guide_low, r)
    mean_p = ops.box_filter(src_low, r)
    cov_ip = ops.box_filter(guide_low * src_low, r) - mean_i * mean_p
    var_i = ops.box_filter(guide_low * guide_low, r) - mean_i * mean_i

    a = cov_ip / (var_i + params.eps)
    b = mean_p - a * mean_i
    mean_a = ops.box_filter(a, r)
    mean_b = ops.box_filter(b, r)

    height, width = guide_full.shape[1:]
    mean_a = ops.resize_bilinear(mean_a, height, width)
    mean_b = ops.resize_bilinear(mean_b, height, width)
    return mean_a * guide_full + mean_b
