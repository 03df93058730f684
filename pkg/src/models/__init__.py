"""CPGA-Net model: config, layers, the enhancement graph and efficiency counters."""
from src.models.config import CpgaConfig
from src.models.cpga import (
    CpgaNet,
    EnhancedOutput,
    a_estimate,
    forward,
    forward_dgf,
    gamma_apply,
    gamma_estimate,
    iaaf_fuse,
    reconstruct,
    t_estimate,
)
from src.models.efficiency import flops_estimate, param_count

__all__ = [
    "CpgaConfig",
    "CpgaNet",
    "EnhancedOutput",
    "a_estimate",
    "forward",
    "forward_dgf",
    "gamma_apply",
    "gamma_estimate",
    "iaaf_fuse",
    "reconstruct",
    "t_estimate",
    "flops_estimate",
    "param_count",
]
