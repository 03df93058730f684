"""CPGA-Net: channel-prior transmission, airlight, global gamma and intersection-aware fusion.

The local branch inverts the scattering model, R = (L - Ã)/t + Ã, with t
estimated from the [dark, bright, Y] prior stack. The global branch predicts
one gamma per image and applies it to R. Fusion takes the union of R and
R^gamma as R + R^gamma - intersection, with the intersection predicted by a
small conv module; only the final result is clamped to [0, 1].
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from src.config import EPS_SAFE, MIN_INPUT_SIZE
from src.imaging.guided_filter import GuidedFilterParams, fast_guided_filter
from src.imaging.priors import PriorStack, build_prior_stack
from src.models.config import CpgaConfig
from src.models.layers import (
    Conv2d,
    ConvRelu,
    Linear,
    Module,
    ResBlock,
    ResCBAM,
    Sequential,
    load_weights,
    state_dict,
)
from src.tensor import ops
from src.tensor.core import Tensor

logger = logging.getLogger(__name__)


@dataclass
class EnhancedOutput:
    """Every interpretable component of one forward pass.

    ``r_hat_raw`` is the pre-clamp union at network resolution, so
    ``r_hat_raw + intersection == r + r_gamma``. After ``forward_dgf`` only
    ``r_hat`` is at full resolution.
    """
    r_hat: Tensor
    r_hat_raw: Tensor
    r: Tensor
    r_gamma: Tensor
    t: Tensor
    a_tilde: Tensor
    gamma: Tensor
    intersection: Tensor
    priors: Optional[PriorStack] = None

    def components(self) -> dict[str, Tensor]:
        return {
            "r_hat": self.r_hat,
            "r": self.r,
            "r_gamma": self.r_gamma,
            "t": self.t,
            "a_tilde": self.a_tilde,
            "intersection": self.intersection,
        }


# ── Branches ────────────────────────────────────────────────────────


class TBranch(Module):
    """conv(3->C) -> ReLU -> ResBlock -> conv(C->1) -> sigmoid."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.stem = Conv2d(3, channels, 3, rng)
        self.body = ResBlock(channels, rng)
        self.head = Conv2d(channels, 1, 3, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.sigmoid(self.head(self.body(ops.relu(self.stem(x)))))


class ABranch(Module):
    """conv(3->C) -> two ResBlocks (or two conv+ReLU) -> conv(C->3) -> sigmoid."""

    def __init__(self, channels: int, rng: np.random.Generator, kind: str = "resblock"):
        super().__init__()
        block = ResBlock if kind == "resblock" else ConvRelu
        self.stem = Conv2d(3, channels, 3, rng)
        self.body = Sequential(block(channels, rng), block(channels, rng))
        self.head = Conv2d(channels, 3, 3, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.sigmoid(self.head(self.body(self.stem(x))))


class GammaBranch(Module):
    """conv(3->C) -> ResCBAM (or ResBlock) -> global average pool -> linear(C->1).

    Returns the unbounded logit; ``gamma_estimate`` maps it into range.
    """

    def __init__(self, channels: int, rng: np.random.Generator, kind: str = "rescbam", reduction: int = 4):
        super().__init__()
        self.stem = Conv2d(3, channels, 3, rng)
        self.body = ResCBAM(channels, rng, reduction) if kind == "rescbam" else ResBlock(channels, rng)
        self.fc = Linear(channels, 1, rng)

    def features(self, x: Tensor) -> Tensor:
        return self.body(self.stem(x))

    def head(self, features: Tensor) -> Tensor:
        return self.fc(ops.global_avg_pool(features))

    def __call__(self, x: Tensor) -> Tensor:
        return self.head(self.features(x))

    def flops(self, height: int, width: int) -> int:
        pooling = self.fc.c_in * height * width
        return super().flops(height, width) + pooling


class IntersectionModule(Module):
    """conv(6->C) -> ReLU -> conv(C->3) on concat(R, R^gamma)."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = Conv2d(6, channels, 3, rng)
        self.conv2 = Conv2d(channels, 3, 3, rng)

    def __call__(self, pair: Tensor) -> Tensor:
        return self.conv2(ops.relu(self.conv1(pair)))


class CpgaNet(Module):
    """The four sub-networks plus the config they were built from.

    Absent branches (ablations) are ``None`` and own no parameters.
    """

    def __init__(self, config: Optional[CpgaConfig] = None, seed: int = 0):
        super().__init__()
        config = config or CpgaConfig()
        rng = np.random.default_rng(seed)
        self.config = config
        self.t_branch = TBranch(config.t_channels, rng) if config.t_input != "none" else None
        self.a_branch = ABranch(config.base_channels, rng, config.a_net)
        self.gamma_branch = (
            GammaBranch(config.gamma_channels, rng, config.g_net, config.cbam_reduction)
            if config.has_gamma else None
        )
        self.intersection_module = (
            IntersectionModule(config.fusion_channels, rng) if config.fusion == "iaaf" else None
        )

    def __call__(self, img: Tensor) -> EnhancedOutput:
        return self.forward(img)

    def forward(self, img: Tensor) -> EnhancedOutput:
        return forward(img, self)

    def forward_dgf(self, img: Tensor, params: Optional[GuidedFilterParams] = None) -> EnhancedOutput:
        return forward_dgf(img, self, params)

    def as_dgf(self) -> "CpgaNet":
        """Copy of this network with the guided-filter path switched on."""
        if self.config.use_dgf:
            return self
        net = CpgaNet(self.config.model_copy(update={"use_dgf": True}))
        load_weights(net, state_dict(self))
        return net

    def enhance(self, img: Tensor) -> EnhancedOutput:
        """Forward pass matching the config: guided-filter path for DGF nets."""
        return self.forward_dgf(img) if self.config.use_dgf else self.forward(img)


# ── Operations ──────────────────────────────────────────────────────


def _check_image(op: str, img: Tensor, min_size: int = MIN_INPUT_SIZE) -> None:
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"{op}: expected a [3,H,W] image, got shape {img.shape}")
    if img.shape[1] < min_size or img.shape[2] < min_size:
        raise ValueError(f"{op}: image {img.shape[1]}x{img.shape[2]} is below the {min_size}x{min_size} minimum")


def t_estimate(source: Union[PriorStack, Tensor], net: CpgaNet) -> Tensor:
    """Transmission map in [t_min, 1] from the prior stack (or raw RGB in the ablation)."""
    if net.t_branch is None:
        raise ValueError("t_estimate: this network was built without a t-branch (t_input='none')")
    x = source.planes if isinstance(source, PriorStack) else source
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValueError(f"t_estimate: expected a 3-plane input, got shape {x.shape}")
    t_min = net.config.t_min
    return t_min + (1.0 - t_min) * net.t_branch(x)


def a_estimate(img: Tensor, net: CpgaNet) -> Tensor:
    """Airlight-like map Ã in [0, 1]."""
    return net.a_branch(img)


def reconstruct(low: Tensor, t: Tensor, a_tilde: Tensor, t_min: float) -> Tensor:
    """R = (L - Ã)/t + Ã, t broadcast across channels; not clamped."""
    if t.ndim != 3 or t.shape[0] != 1 or t.shape[1:] != low.shape[1:]:
        raise ValueError(f"reconstruct: t must be [1,H,W] matching {low.shape}, got {t.shape}")
    if a_tilde.shape != low.shape:
        raise ValueError(f"reconstruct: Ã shape {a_tilde.shape} differs from input {low.shape}")
    t_low = float(t.data.min())
    if t_low < t_min - 1e-6:
        raise ValueError(f"reconstruct: transmission {t_low:.6g} fell below t_min={t_min}")
    return (low - a_tilde) / t + a_tilde


def map_gamma(logit: Tensor, bounds: tuple[float, float]) -> Tensor:
    lo, hi = bounds
    return ops.clamp(lo + ops.softplus(logit), hi=hi)


def gamma_estimate(img: Tensor, net: CpgaNet) -> Tensor:
    """One gamma per image, shape (1,), in the configured bounds."""
    if net.gamma_branch is None:
        raise ValueError("gamma_estimate: this network was built without a gamma branch (g_net='none')")
    return map_gamma(net.gamma_branch(img), net.config.gamma_bounds)


def gamma_apply(r: Tensor, gamma: Union[Tensor, float]) -> Tensor:
    """clamp(R, EPS_SAFE, 1) ** gamma, differentiable in R and gamma."""
    gamma = gamma if isinstance(gamma, Tensor) else Tensor(gamma)
    if gamma.size != 1:
        raise ValueError(f"gamma_apply: gamma must be a scalar, got shape {gamma.shape}")
    if gamma.item() <= 0:
        raise ValueError(f"gamma_apply: gamma must be > 0, got {gamma.item()}")
    return ops.pow(ops.clamp(r, EPS_SAFE, 1.0), gamma)


def intersect(r: Tensor, r_gamma: Tensor, net: CpgaNet) -> Tensor:
    if r.shape != r_gamma.shape:
        raise ValueError(f"intersect: R {r.shape} and R^gamma {r_gamma.shape} differ")
    if net.intersection_module is None:
        raise ValueError("intersect: this network was built without fusion (fusion='none')")
    return net.intersection_module(ops.concat([r, r_gamma], axis=0))


def union(r: Tensor, r_gamma: Tensor, intersection: Tensor) -> Tensor:
    """Unclamped R + R^gamma - (R ∩ R^gamma)."""
    return r + r_gamma - intersection


def iaaf_fuse(r: Tensor, r_gamma: Tensor, net: CpgaNet) -> tuple[Tensor, Tensor]:
    """Intersection-aware fusion: returns (clamped R̂, intersection)."""
    intersection = intersect(r, r_gamma, net)
    return ops.clamp(union(r, r_gamma, intersection), 0.0, 1.0), intersection


def forward(img: Tensor, net: CpgaNet) -> EnhancedOutput:
    """Full-resolution pass exposing every component."""
    _check_image("forward", img)
    cfg = net.config
    priors = build_prior_stack(img)
    a_tilde = a_estimate(img, net)

    if cfg.t_input == "none":
        t = Tensor(np.ones((1,) + img.shape[1:]))
        r = a_tilde
    else:
        t = t_estimate(priors if cfg.t_input == "priors" else img, net)
        r = reconstruct(img, t, a_tilde, cfg.t_min)

    if cfg.has_gamma:
        gamma = gamma_estimate(img, net)
        r_gamma = gamma_apply(r, gamma)
    else:
        gamma = Tensor(1.0)
        r_gamma = r

    if cfg.fusion == "iaaf":
        intersection = intersect(r, r_gamma, net)
        r_hat_raw = union(r, r_gamma, intersection)
    else:
        # intersection := R keeps R̂ = R + R^gamma - intersection = R^gamma
        intersection = r
        r_hat_raw = r_gamma

    logger.debug(f"forward {img.shape[1]}x{img.shape[2]}: gamma={gamma.item():.4f}, t_min={float(t.data.min()):.4f}")
    return EnhancedOutput(
        r_hat=ops.clamp(r_hat_raw, 0.0, 1.0),
        r_hat_raw=r_hat_raw,
        r=r,
        r_gamma=r_gamma,
        t=t,
        a_tilde=a_tilde,
        gamma=gamma,
        intersection=intersection,
        priors=priors,
    )


def low_resolution(height: int, width: int, factor: int) -> tuple[int, int]:
    lh, lw = max(1, height // factor), max(1, width // factor)
    if lh < MIN_INPUT_SIZE or lw < MIN_INPUT_SIZE:
        raise ValueError(
            f"forward_dgf: {height}x{width} downsampled by {factor} gives {lh}x{lw}, "
            f"below the {MIN_INPUT_SIZE}x{MIN_INPUT_SIZE} minimum"
        )
    return lh, lw


def forward_dgf(img: Tensor, net: CpgaNet, params: Optional[GuidedFilterParams] = None) -> EnhancedOutput:
    """Run the network on a downsampled copy, lift R̂ back with the fast guided filter.

    Component maps stay at low resolution; gamma is unchanged.
    """
    cfg = net.config
    if not cfg.use_dgf:
        raise ValueError("forward_dgf: network config has use_dgf=False")
    _check_image("forward_dgf", img)
    params = params or cfg.guided_filter
    height, width = img.shape[1:]
    lh, lw = low_resolution(height, width, cfg.dgf_downsample)

    img_low = ops.resize_bilinear(img, lh, lw)
    out = forward(img_low, net)
    lifted = fast_guided_filter(img_low, out.r_hat, img, params)
    return replace(out, r_hat=ops.clamp(lifted, 0.0, 1.0))
