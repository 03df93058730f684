"""Training objectives: L1, proxy perceptual loss, component distillation and their weighted sums.

All norms use mean reduction so the weights do not depend on resolution.
"""
import logging
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.config import LOSS_WEIGHTS, LUMA_WEIGHTS, PROXY_BLUR_SIGMA, PROXY_SCALES
from src.models.cpga import EnhancedOutput
from src.tensor import ops
from src.tensor.core import Tensor

logger = logging.getLogger(__name__)

KD_COMPONENTS = ("gamma", "a_tilde", "intersection")


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda_l1: float = Field(LOSS_WEIGHTS[0], ge=0)
    lambda_per: float = Field(LOSS_WEIGHTS[1], ge=0)
    lambda_kd: float = Field(LOSS_WEIGHTS[2], ge=0)


def _check_same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shapes differ ({a.shape} vs {b.shape})")


def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    _check_same("l1_loss", a, b)
    return ops.mean(ops.abs(a - b))


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    _check_same("mse_loss", a, b)
    return ops.mean(ops.square(a - b))


def _proxy_kernels(sigma: float) -> np.ndarray:
    """[3,1,5,5]: Gaussian blur, then horizontal and vertical central differences."""
    ax = np.arange(-2, 3, dtype=np.float64)
    g1 = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    g1 /= g1.sum()
    kernels = np.zeros((3, 1, 5, 5))
    kernels[0, 0] = np.outer(g1, g1)
    kernels[1, 0, 2, 1], kernels[1, 0, 2, 3] = -0.5, 0.5
    kernels[2, 0, 1, 2], kernels[2, 0, 3, 2] = -0.5, 0.5
    return kernels


class ProxyFeatureExtractor:
    """Fixed multi-scale filter bank standing in for a pretrained feature network.

    Per scale the luminance plane is resized by 1/s and filtered into three
    planes: blurred intensity, horizontal and vertical gradients. Nothing here
    is trainable.
    """

    def __init__(self, scales: tuple[int, ...] = PROXY_SCALES, sigma: float = PROXY_BLUR_SIGMA):
        if not scales or any(s < 1 for s in scales):
            raise ValueError(f"scales must be positive integers, got {scales}")
        self.scales = tuple(scales)
        self.sigma = sigma
        self._kernels = _proxy_kernels(sigma)
        self._luma = np.asarray([LUMA_WEIGHTS])

    def __call__(self, img: Tensor) -> list[Tensor]:
        if img.ndim != 3 or img.shape[0] != 3:
            raise ValueError(f"ProxyFeatureExtractor: expected a [3,H,W] image, got shape {img.shape}")
        weight = Tensor(self._kernels)
        bias = Tensor(np.zeros(3))
        y = ops.channel_mix(img, self._luma)
        height, width = img.shape[1:]
        features = []
        for s in self.scales:
            scaled = ops.resize_bilinear(y, max(1, height // s), max(1, width // s))
            features.append(ops.conv2d(scaled, weight, bias, stride=1, padding=2))
        return features


_DEFAULT_EXTRACTOR: Optional[ProxyFeatureExtractor] = None


def default_extractor() -> ProxyFeatureExtractor:
    global _DEFAULT_EXTRACTOR
    if _DEFAULT_EXTRACTOR is None:
        _DEFAULT_EXTRACTOR = ProxyFeatureExtractor()
    return _DEFAULT_EXTRACTOR


def perceptual_proxy_loss(a: Tensor, b: Tensor, extractor: Optional[ProxyFeatureExtractor] = None) -> Tensor:
    """Feature MSE averaged over the extractor's scales."""
    _check_same("perceptual_proxy_loss", a, b)
    extractor = extractor or default_extractor()
    per_scale = [mse_loss(fa, fb) for fa, fb in zip(extractor(a), extractor(b))]
    return ops.mean_of(per_scale)


def _align(teacher: Tensor, student: Tensor) -> Tensor:
    target = teacher.detach()
    if target.ndim == 3 and target.shape[1:] != student.shape[1:]:
        target = ops.resize_bilinear(target, *student.shape[1:])
    return target


def kd_loss(teacher: EnhancedOutput, student: EnhancedOutput) -> Tensor:
    """Sum of MSEs over gamma, Ã and the intersection map; teacher side is constant."""
    total = None
    for name in KD_COMPONENTS:
        s = getattr(student, name)
        term = mse_loss(_align(getattr(teacher, name), s), s)
        total = term if total is None else total + term
    return total


def _prediction(out: Union[EnhancedOutput, Tensor]) -> Tensor:
    return out.r_hat if isinstance(out, EnhancedOutput) else out


def enhance_loss(
    out: Union[EnhancedOutput, Tensor],
    gt: Tensor,
    weights: LossWeights = LossWeights(),
    extractor: Optional[ProxyFeatureExtractor] = None,
) -> Tensor:
    """lambda_l1 * L1 + lambda_per * L_per on the final output (L_per skipped at weight 0)."""
    pred = _prediction(out)
    _check_same("enhance_loss", pred, gt)
    loss = weights.lambda_l1 * l1_loss(pred, gt)
    if weights.lambda_per > 0:
        loss = loss + weights.lambda_per * perceptual_proxy_loss(pred, gt, extractor)
    return loss


def total_loss_dgf(
    out: EnhancedOutput,
    gt: Tensor,
    teacher: EnhancedOutput,
    weights: LossWeights = LossWeights(),
    extractor: Optional[ProxyFeatureExtractor] = None,
) -> Tensor:
    """Enhancement loss plus lambda_kd * distillation loss."""
    loss = enhance_loss(out, gt, weights, extractor)
    if weights.lambda_kd > 0:
        loss = loss + weights.lambda_kd * kd_loss(teacher, out)
    return loss
