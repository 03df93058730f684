"""Configuration settings for the enhancement engine."""
import os

# Numerical guards
EPS_SAFE = 1e-6  # clamp floor for division denominators, log arguments and pow bases
FD_STEP = 1e-3  # central-difference step used by gradient checks

# BT.601 full-range luminance weights (R, G, B)
LUMA_WEIGHTS = (0.299, 0.587, 0.114)
PRIOR_ORDER = ("dark", "bright", "y")

# Model defaults
T_MIN = 0.05
GAMMA_BOUNDS = (0.1, 5.0)
REGULAR_CHANNELS = 16
DGF_CHANNELS = 8
DGF_DOWNSAMPLE = 2
CBAM_REDUCTION = 4
SPATIAL_ATTENTION_KERNEL = 7
MIN_INPUT_SIZE = 8

# Guided filter defaults (radius at low resolution)
GF_RADIUS = 1
GF_EPS = 1e-2

# Adam defaults
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# Loss weights: lambda1 (L1), lambda2 (perceptual), lambda3 (distillation)
LOSS_WEIGHTS = (1.0, 0.01, 0.1)
PROXY_SCALES = (1, 2, 4)
PROXY_BLUR_SIGMA = 1.0

# Metrics
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K = (0.01, 0.03)
EFFICIENCY_SIZE = (400, 600)  # H, W of a LOL frame

# Data
LOL_LAYOUT = ("low", "high")
IMAGE_SUFFIXES = (".png",)
DEFAULT_CROP = 256
DEFAULT_BATCH = 8
FLIP_PROBABILITY = 0.5
PREFETCH_DEPTH = int(os.getenv("CPGA_PREFETCH", "2"))

# Training stages: epochs and learning rate per stage
STAGE_DEFAULTS = {
    "selfsup": {"epochs": 20, "lr": 1e-4},
    "supervised": {"epochs": 50, "lr": 1e-4},
    "kd": {"epochs": 30, "lr": 1e-5},
    "dgf": {"epochs": 30, "lr": 1e-5},
}
STAGE_ALIASES = {"kd_finetune": "kd", "dgf_finetune": "dgf"}

# Architecture ablation rows (network-architecture study on LOLv1)
ABLATION_PRESETS = {
    "a": {"t_input": "none", "a_net": "conv", "g_net": "none", "fusion": "none"},
    "b": {"t_input": "none", "a_net": "resblock", "g_net": "none", "fusion": "none"},
    "c": {"t_input": "rgb", "a_net": "conv", "g_net": "none", "fusion": "none"},
    "d": {"t_input": "priors", "a_net": "conv", "g_net": "none", "fusion": "none"},
    "e": {"t_input": "rgb", "a_net": "resblock", "g_net": "none", "fusion": "none"},
    "f": {"t_input": "priors", "a_net": "resblock", "g_net": "none", "fusion": "none"},
    "g": {"t_input": "priors", "a_net": "resblock", "g_net": "resblock", "fusion": "none"},
    "h": {"t_input": "rgb", "a_net": "resblock", "g_net": "resblock", "fusion": "iaaf"},
    "i": {"t_input": "priors", "a_net": "resblock", "g_net": "resblock", "fusion": "iaaf"},
    "j": {"t_input": "priors", "a_net": "resblock", "g_net": "rescbam", "fusion": "iaaf"},
}

# Checkpoint file format
CHECKPOINT_MAGIC = b"CPGA"
CHECKPOINT_VERSION = 1

# Runtime
THREADS = int(os.getenv("CPGA_THREADS", "0")) or (os.cpu_count() or 1)
LOG_LEVEL = os.getenv("CPGA_LOG_LEVEL", "INFO")


def resolve_threads(requested=None) -> int:
    """Worker count from a flag value, falling back to CPGA_THREADS / logical cores."""
    if requested is not None and requested > 0:
        return int(requested)
    return THREADS
