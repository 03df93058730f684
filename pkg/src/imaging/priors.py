"""Channel priors feeding transmission estimation: dark, bright and luminance planes."""
import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.ndimage import maximum_filter, minimum_filter

from src.config import LUMA_WEIGHTS, PRIOR_ORDER
from src.tensor import ops
from src.tensor.core import Tensor

logger = logging.getLogger(__name__)

_LUMA = np.asarray([LUMA_WEIGHTS], dtype=np.float64)


class PatchSpec(BaseModel):
    """Square window Omega(x) of side 2*radius+1 centred on each pixel."""
    model_config = ConfigDict(frozen=True)

    radius: int = Field(0, ge=0)

    @property
    def size(self) -> int:
        return 2 * self.radius + 1


@dataclass(frozen=True)
class PriorStack:
    """[dark, bright, Y] planes of one image, in that fixed order."""
    planes: Tensor

    @property
    def dark(self) -> Tensor:
        return Tensor.wrap(self.planes.data[0:1])

    @property
    def bright(self) -> Tensor:
        return Tensor.wrap(self.planes.data[1:2])

    @property
    def y(self) -> Tensor:
        return Tensor.wrap(self.planes.data[2:3])

    def as_dict(self) -> dict:
        return dict(zip(PRIOR_ORDER, (self.dark, self.bright, self.y)))


def _check_rgb(op: str, img: Tensor) -> None:
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"{op}: expected a [3,H,W] RGB tensor, got shape {img.shape}")


def dark_channel(img: Tensor) -> Tensor:
    """Per-pixel minimum over R, G, B."""
    _check_rgb("dark_channel", img)
    return ops.amin(img, axis=0)


def bright_channel(img: Tensor) -> Tensor:
    """Per-pixel maximum over R, G, B."""
    _check_rgb("bright_channel", img)
    return ops.amax(img, axis=0)


def dark_channel_patch(img: Tensor, patch: PatchSpec) -> Tensor:
    """Dark channel followed by a minimum over the border-clipped window."""
    plane = dark_channel(img)
    if patch.radius == 0:
        return plane
    # nearest-mode padding only repeats in-window pixels, so min == clipped-window min
    return Tensor.wrap(minimum_filter(plane.data[0], size=patch.size, mode="nearest")[None])


def bright_channel_patch(img: Tensor, patch: PatchSpec) -> Tensor:
    plane = bright_channel(img)
    if patch.radius == 0:
        return plane
    return Tensor.wrap(maximum_filter(plane.data[0], size=patch.size, mode="nearest")[None])


def luminance_y(img: Tensor) -> Tensor:
    """BT.601 full-range luma: 0.299 R + 0.587 G + 0.114 B."""
    _check_rgb("luminance_y", img)
    return ops.channel_mix(img, _LUMA)


def build_prior_stack(img: Tensor) -> PriorStack:
    planes = ops.concat([dark_channel(img), bright_channel(img), luminance_y(img)], axis=0)
    return PriorStack(planes=planes)
