"""Shared fixtures: seeded generators, small images, tiny networks and LOL-layout datasets.

Datasets are written as real PNG files under ``tmp_path`` so the loaders and
the CLI run against the same code path as production data.
"""
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

# Ensure imports resolve from project root
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.models.config import CpgaConfig
from src.models.cpga import CpgaNet
from src.tensor.core import Tensor


def write_png(path: Path, pixels: np.ndarray) -> Path:
    """Write an HxWx3 (or HxW) uint8 array."""
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(pixels)).save(path, format="PNG")
    return path


def make_pair(rng: np.random.Generator, height: int = 24, width: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """A bright ground truth and a darkened copy, both uint8 HxWx3."""
    gt = rng.integers(60, 256, size=(height, width, 3), dtype=np.uint8)
    low = (gt.astype(np.float64) * 0.15).astype(np.uint8)
    return low, gt


def write_lol(root: Path, n: int = 4, seed: int = 0, height: int = 24, width: int = 32) -> Path:
    rng = np.random.default_rng(seed)
    for i in range(n):
        low, gt = make_pair(rng, height, width)
        write_png(root / "low" / f"{i}.png", low)
        write_png(root / "high" / f"{i}.png", gt)
    return root


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture()
def image(rng):
    """A 3x16x20 image in [0,1]."""
    return Tensor(rng.uniform(0.02, 0.98, size=(3, 16, 20)))


@pytest.fixture()
def tiny_config():
    """Full architecture at reduced widths so forward passes stay fast."""
    return CpgaConfig(base_channels=4, t_channels=4, gamma_channels=4, fusion_channels=4)


@pytest.fixture()
def tiny_net(tiny_config):
    return CpgaNet(tiny_config, seed=7)


@pytest.fixture()
def lol_root(tmp_path):
    return write_lol(tmp_path / "lol", n=4)
