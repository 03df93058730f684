"""Paired low/normal-light datasets in the LOL layout, patch sampling and augmentation."""
import logging
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from src.config import DEFAULT_CROP, FLIP_PROBABILITY, IMAGE_SUFFIXES, LOL_LAYOUT, PREFETCH_DEPTH
from src.errors import ImageReadError
from src.imaging.io import load_image
from src.tensor.core import Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairedSample:
    """A low-light image and its ground truth, same size, both in [0,1]."""
    low: Tensor
    gt: Tensor
    id: str

    def __post_init__(self):
        if self.low.shape != self.gt.shape:
            raise ValueError(f"sample '{self.id}': low {self.low.shape} and gt {self.gt.shape} differ")
        if self.low.ndim != 3 or self.low.shape[0] != 3:
            raise ValueError(f"sample '{self.id}': expected [3,H,W] images, got {self.low.shape}")
        for name, t in (("low", self.low), ("gt", self.gt)):
            if t.data.min() < 0.0 or t.data.max() > 1.0:
                raise ValueError(f"sample '{self.id}': {name} values leave [0,1]")

    @property
    def size(self) -> tuple[int, int]:
        return self.low.shape[1], self.low.shape[2]


@dataclass(frozen=True)
class PairPaths:
    low_path: Path
    gt_path: Path
    id: str


@dataclass
class DatasetIndex:
    root: Path
    pairs: list[PairPaths] = field(default_factory=list)
    split: str = "train"

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[PairPaths]:
        return iter(self.pairs)

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.pairs]

    def load(self, i: int) -> PairedSample:
        entry = self.pairs[i]
        return PairedSample(load_image(entry.low_path), load_image(entry.gt_path), entry.id)

    def subset(self, n: int) -> "DatasetIndex":
        return DatasetIndex(self.root, self.pairs[:n], self.split)


def _images_by_stem(folder: Path) -> dict[str, Path]:
    if not folder.is_dir():
        return {}
    return {
        p.stem: p for p in sorted(folder.iterdir())
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    }


def scan_dataset(
    root: Union[str, Path],
    layout: Sequence[str] = LOL_LAYOUT,
    split: str = "train",
) -> DatasetIndex:
    """Pair ``<root>/<low>/*.png`` with ``<root>/<high>/*.png`` by filename stem.

    Unmatched files are logged and skipped; no pairs at all is an error.
    """
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"dataset root {root} does not exist or is not a directory")
    low_dir, high_dir = (root / name for name in layout)
    lows, highs = _images_by_stem(low_dir), _images_by_stem(high_dir)

    matched = sorted(set(lows) & set(highs))
    unmatched = sorted(set(lows) ^ set(highs))
    for stem in unmatched:
        side = layout[0] if stem in lows else layout[1]
        logger.warning(f"Skipping '{stem}': only present in {side}/")

    if not matched:
        listing = ", ".join(unmatched) if unmatched else "(no images found)"
        raise ValueError(f"no paired images under {root} ({'/'.join(layout)}); unmatched stems: {listing}")

    pairs = [PairPaths(lows[s], highs[s], s) for s in matched]
    logger.info(f"Indexed {len(pairs)} pairs under {root} ({len(unmatched)} unmatched)")
    return DatasetIndex(root=root, pairs=pairs, split=split)


def derive_seed(master: int, *keys: int) -> int:
    """Independent child seed for (epoch, step, ...) from one master seed."""
    return int(np.random.SeedSequence([master, *keys]).generate_state(1)[0])


def random_patch_pair(sample: PairedSample, size: Optional[int], seed: int) -> PairedSample:
    """Same random size x size window cut from low and gt; ``None`` keeps the full frame."""
    height, width = sample.size
    if size is None:
        return sample
    if size < 1 or size > min(height, width):
        raise ValueError(f"crop size {size} does not fit sample '{sample.id}' of {height}x{width}")
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, height - size + 1))
    left = int(rng.integers(0, width - size + 1))
    rows, cols = slice(top, top + size), slice(left, left + size)
    return PairedSample(
        Tensor.wrap(sample.low.data[:, rows, cols].copy()),
        Tensor.wrap(sample.gt.data[:, rows, cols].copy()),
        sample.id,
    )


def augment(sample: PairedSample, seed: int, p: float = FLIP_PROBABILITY) -> PairedSample:
    """Horizontal flip of both images with probability ``p``."""
    rng = np.random.default_rng(seed)
    if rng.random() >= p:
        return sample
    return PairedSample(
        Tensor.wrap(sample.low.data[:, :, ::-1].copy()),
        Tensor.wrap(sample.gt.data[:, :, ::-1].copy()),
        sample.id,
    )


def epoch_order(n: int, seed: int, epoch: int) -> list[int]:
    return [int(i) for i in np.random.default_rng(derive_seed(seed, epoch)).permutation(n)]


_DONE = object()


class PrefetchLoader:
    """Loads, crops and flips samples on a background thread into a bounded queue.

    Samples come out in ``order``; unreadable pairs are logged and skipped.
    """

    def __init__(
        self,
        index: DatasetIndex,
        order: Sequence[int],
        crop: Optional[int] = DEFAULT_CROP,
        seed: int = 0,
        epoch: int = 0,
        train: bool = True,
        depth: int = PREFETCH_DEPTH,
    ):
        self.index = index
        self.order = list(order)
        self.crop = crop
        self.seed = seed
        self.epoch = epoch
        self.train = train
        self.skipped: list[str] = []
        self._queue: queue.Queue = queue.Queue(maxsize=max(1, depth))
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _prepare(self, step: int, i: int) -> Optional[PairedSample]:
        try:
            sample = self.index.load(i)
        except (ImageReadError, ValueError) as e:
            logger.warning(f"Skipping pair '{self.index.pairs[i].id}': {e}")
            self.skipped.append(self.index.pairs[i].id)
            return None
        if not self.train:
            return sample
        crop = self.crop if self.crop is None else min(self.crop, *sample.size)
        sample = random_patch_pair(sample, crop, derive_seed(self.seed, self.epoch, step, 0))
        return augment(sample, derive_seed(self.seed, self.epoch, step, 1))

    def _worker(self) -> None:
        try:
            for step, i in enumerate(self.order):
                if self._stop.is_set():
                    return
                sample = self._prepare(step, i)
                if sample is not None:
                    self._queue.put(sample)
        except Exception as e:  # surfaced to the consumer
            self._queue.put(e)
        finally:
            self._queue.put(_DONE)

    def __iter__(self) -> Iterator[PairedSample]:
        self._thread = threading.Thread(target=self._worker, name="cpga-prefetch", daemon=True)
        self._thread.start()
        try:
            while True:
                item = self._queue.get()
                if item is _DONE:
                    break
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            self.close()

    def close(self) -> None:
        self._stop.set()
        while self._thread is not None and self._thread.is_alive():
            try:
                self._queue.get_nowait()
            except queue.Empty:
                self._thread.join(timeout=0.05)
        self._thread = None


def batches(samples: Iterator[PairedSample], batch_size: int) -> Iterator[list[PairedSample]]:
    batch: list[PairedSample] = []
    for sample in samples:
        batch.append(sample)
        if len(batch) == batch_size:
            yield batch
            batch = []
    if batch:
        yield batch
