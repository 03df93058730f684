"""Image-side operators: channel priors, guided filter and the PNG codec."""
from src.imaging.guided_filter import GuidedFilterParams, fast_guided_filter
from src.imaging.priors import (
    PatchSpec,
    PriorStack,
    bright_channel,
    bright_channel_patch,
    build_prior_stack,
    dark_channel,
    dark_channel_patch,
    luminance_y,
)

__all__ = [
    "GuidedFilterParams",
    "PatchSpec",
    "PriorStack",
    "bright_channel",
    "bright_channel_patch",
    "build_prior_stack",
    "dark_channel",
    "dark_channel_patch",
    "fast_guided_filter",
    "luminance_y",
]
