"""Quality metrics and evaluation reports."""
from src.analytics.metrics import psnr, psnr_window, ssim

__all__ = [
    "psnr",
    "psnr_window",
    "ssim",
]
