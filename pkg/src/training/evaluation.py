"""Evaluation runs: per-image PSNR/SSIM, efficiency figures and timing."""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.analytics.metrics import psnr, ssim
from src.config import EFFICIENCY_SIZE, resolve_threads
from src.data.dataset import DatasetIndex, PairPaths
from src.errors import ImageReadError
from src.imaging.io import load_image
from src.models.cpga import CpgaNet
from src.models.efficiency import flops_estimate, param_count

logger = logging.getLogger(__name__)

Baseline = Literal["low", "gt"]


class ImageScore(BaseModel):
    id: str
    psnr: float
    ssim: float
    seconds: float


class EvalReport(BaseModel):
    # inf PSNR (identical images) is written as the string "inf" to keep the file strict JSON
    model_config = ConfigDict(ser_json_inf_nan="strings")

    checkpoint: Optional[str] = None
    baseline: Optional[Baseline] = None
    data: str
    images: list[ImageScore] = Field(default_factory=list)
    missing: list[str] = Field(default_factory=list)
    mean_psnr: Optional[float] = None
    mean_ssim: Optional[float] = None
    mean_seconds: Optional[float] = None
    param_count: Optional[int] = None
    flops: Optional[int] = None
    flops_size: tuple[int, int] = EFFICIENCY_SIZE


def _score(entry: PairPaths, net: Optional[CpgaNet], baseline: Optional[Baseline]) -> ImageScore:
    low = load_image(entry.low_path)
    gt = load_image(entry.gt_path)
    if low.shape != gt.shape:
        raise ValueError(f"low {low.shape} and gt {gt.shape} differ")
    start = time.perf_counter()
    if baseline == "low":
        pred = low
    elif baseline == "gt":
        pred = gt
    else:
        pred = net.enhance(low).r_hat
    seconds = time.perf_counter() - start
    return ImageScore(id=entry.id, psnr=psnr(pred, gt), ssim=ssim(pred, gt), seconds=seconds)


def evaluate(
    net: Optional[CpgaNet],
    index: DatasetIndex,
    baseline: Optional[Baseline] = None,
    threads: Optional[int] = None,
    checkpoint: Optional[str] = None,
) -> EvalReport:
    """Score every pair of ``index``; unreadable pairs are listed in ``missing``.

    Args:
        net: Network to run; ignored when ``baseline`` is given.
        index: Pairs to score.
        baseline: Score the raw low-light input (``low``) or the ground truth
            itself (``gt``) instead of a network.
        threads: Worker threads; falls back to ``CPGA_THREADS`` then the core count.
        checkpoint: Checkpoint path recorded in the report.

    Returns:
        Per-image scores, means, and parameter/FLOP figures for a network.
    """
    if net is None and baseline is None:
        raise ValueError("evaluate needs a network or a baseline")

    def work(entry: PairPaths):
        try:
            return _score(entry, net, baseline)
        except (ImageReadError, ValueError) as e:
            logger.warning(f"Skipping '{entry.id}': {e}")
            return entry.id

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as pool:
        results = list(pool.map(work, index.pairs))

    scores = [r for r in results if isinstance(r, ImageScore)]
    missing = [r for r in results if isinstance(r, str)]
    report = EvalReport(
        checkpoint=checkpoint,
        baseline=baseline,
        data=str(index.root),
        images=scores,
        missing=missing,
    )
    if scores:
        report.mean_psnr = float(np.mean([s.psnr for s in scores]))
        report.mean_ssim = float(np.mean([s.ssim for s in scores]))
        report.mean_seconds = float(np.mean([s.seconds for s in scores]))
    if net is not None and baseline is None:
        report.param_count = param_count(net)
        report.flops = flops_estimate(net, *EFFICIENCY_SIZE)
    logger.info(f"Evaluated {len(scores)} pairs ({len(missing)} missing): mean PSNR {report.mean_psnr}")
    return report


def validation_psnr(net: CpgaNet, index: DatasetIndex, threads: Optional[int] = None) -> float:
    report = evaluate(net, index, threads=threads)
    if report.mean_psnr is None:
        raise ValueError(f"no readable validation pairs under {index.root}")
    return report.mean_psnr
