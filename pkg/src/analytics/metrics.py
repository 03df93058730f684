"""Full-reference quality metrics: PSNR and luminance SSIM."""
import logging
from typing import Union

import numpy as np
from scipy.signal import correlate2d

from src.config import LUMA_WEIGHTS, SSIM_K, SSIM_SIGMA, SSIM_WINDOW
from src.tensor.core import Tensor

logger = logging.getLogger(__name__)

ImageLike = Union[Tensor, np.ndarray]


def _as_array(x: ImageLike) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def _pair(op: str, a: ImageLike, b: ImageLike) -> tuple[np.ndarray, np.ndarray]:
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"{op}: shapes differ ({a.shape} vs {b.shape})")
    return a, b


def psnr(a: ImageLike, b: ImageLike, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB; identical images give +inf."""
    a, b = _pair("psnr", a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak ** 2 / mse))


def psnr_window(a: ImageLike, b: ImageLike, top: int, left: int, size: int, peak: float = 1.0) -> float:
    """PSNR restricted to the square window at (top, left) of a [C,H,W] pair."""
    a, b = _pair("psnr_window", a, b)
    if top < 0 or left < 0 or top + size > a.shape[1] or left + size > a.shape[2]:
        raise ValueError(f"psnr_window: window ({top},{left},{size}) outside image {a.shape[1:]}")
    rows, cols = slice(top, top + size), slice(left, left + size)
    return psnr(a[:, rows, cols], b[:, rows, cols], peak)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def luma(x: np.ndarray) -> np.ndarray:
    """BT.601 Y of a [3,H,W] array; single planes pass through."""
    if x.ndim == 3 and x.shape[0] == 3:
        return np.tensordot(np.asarray(LUMA_WEIGHTS), x, axes=([0], [0]))
    if x.ndim == 3 and x.shape[0] == 1:
        return x[0]
    if x.ndim == 2:
        return x
    raise ValueError(f"luma: expected [3,H,W], [1,H,W] or [H,W], got shape {x.shape}")


def ssim(a: ImageLike, b: ImageLike, peak: float = 1.0) -> float:
    """Single-scale SSIM on the Y plane, Gaussian window, mean over valid positions."""
    a, b = _pair("ssim", a, b)
    ya, yb = luma(a), luma(b)
    if ya.shape[0] < SSIM_WINDOW or ya.shape[1] < SSIM_WINDOW:
        raise ValueError(f"ssim: image {ya.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")

    window = gaussian_window()
    c1 = (SSIM_K[0] * peak) ** 2
    c2 = (SSIM_K[1] * peak) ** 2

    def filt(x: np.ndarray) -> np.ndarray:
        return correlate2d(x, window, mode="valid")

    mu_a, mu_b = filt(ya), filt(yb)
    var_a = filt(ya * ya) - mu_a * mu_a
    var_b = filt(yb * yb) - mu_b * mu_b
    cov = filt(ya * yb) - mu_a * mu_b

    numerator = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    denominator = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(numerator / denominator))
