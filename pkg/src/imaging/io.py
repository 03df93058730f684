"""PNG codec boundary: 8-bit RGB files <-> [3,H,W] tensors in [0,1]."""
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from src.errors import ImageReadError
from src.tensor.core import Tensor

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def load_image(path: PathLike) -> Tensor:
    """Decode an image as RGB (grayscale promoted, alpha dropped), scaled by 1/255."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError as e:
        raise ImageReadError(path, "file not found") from e
    except (UnidentifiedImageError, OSError) as e:
        raise ImageReadError(path, f"unreadable image ({e})") from e

    logger.debug(f"Loaded {path.name}: {rgb.shape[1]}x{rgb.shape[0]}")
    return Tensor(rgb.transpose(2, 0, 1).astype(np.float32) / 255.0)


def to_uint8(data: np.ndarray) -> np.ndarray:
    """Clip to [0,1] and round half-up to 8 bits."""
    return np.floor(np.clip(data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(t: Union[Tensor, np.ndarray], path: PathLike) -> Path:
    """Write a [3,H,W] or [1,H,W] tensor as an 8-bit PNG."""
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    if data.ndim != 3 or data.shape[0] not in (1, 3):
        raise ValueError(f"save_image expects [3,H,W] or [1,H,W], got shape {data.shape}")
    path = Path(path)
    pixels = to_uint8(data)
    img = Image.fromarray(pixels[0]) if data.shape[0] == 1 else Image.fromarray(np.ascontiguousarray(pixels.transpose(1, 2, 0)))
    try:
        img.save(path, format="PNG")
    except OSError as e:
        raise ImageReadError(path, f"cannot write image ({e})") from e
    logger.debug(f"Saved {path}")
    return path
