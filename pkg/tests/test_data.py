"""Dataset scanning, PNG codec, paired crops/flips and the prefetching loader."""
import logging

import numpy as np
import pytest

from conftest import write_png
from src.analytics.metrics import psnr, psnr_window
from src.data.dataset import (
    PairedSample,
    PrefetchLoader,
    augment,
    batches,
    derive_seed,
    epoch_order,
    random_patch_pair,
    scan_dataset,
)
from src.errors import ImageReadError
from src.imaging.io import load_image, save_image, to_uint8
from src.tensor.core import Tensor


def sample_from(rng, h=12, w=16, id="s"):
    return PairedSample(Tensor(rng.uniform(size=(3, h, w))), Tensor(rng.uniform(size=(3, h, w))), id)


# ── Scanning ────────────────────────────────────────────────────────


class TestScanDataset:
    def test_single_pair(self, tmp_path):
        write_png(tmp_path / "low" / "1.png", np.zeros((8, 8, 3), dtype=np.uint8))
        write_png(tmp_path / "high" / "1.png", np.zeros((8, 8, 3), dtype=np.uint8))
        index = scan_dataset(tmp_path)
        assert len(index) == 1
        assert index.ids == ["1"]

    def test_unmatched_only_is_rejected(self, tmp_path, caplog):
        write_png(tmp_path / "low" / "2.png", np.zeros((8, 8, 3), dtype=np.uint8))
        (tmp_path / "high").mkdir()
        with caplog.at_level(logging.WARNING, logger="src.data.dataset"):
            with pytest.raises(ValueError, match="2"):
                scan_dataset(tmp_path)
        assert any("'2'" in r.getMessage() for r in caplog.records)

    def test_unmatched_skipped_alongside_pairs(self, lol_root, caplog):
        write_png(lol_root / "high" / "extra.png", np.zeros((8, 8, 3), dtype=np.uint8))
        with caplog.at_level(logging.WARNING, logger="src.data.dataset"):
            index = scan_dataset(lol_root)
        assert index.ids == ["0", "1", "2", "3"]
        assert any("extra" in r.getMessage() for r in caplog.records)

    def test_fifteen_pair_eval_layout(self, tmp_path):
        from conftest import write_lol

        index = scan_dataset(write_lol(tmp_path / "eval15", n=15), split="test")
        assert len(index) == 15
        assert index.split == "test"

    def test_lexicographic_order(self, tmp_path):
        for stem in ("b", "a", "c"):
            write_png(tmp_path / "low" / f"{stem}.png", np.zeros((8, 8, 3), dtype=np.uint8))
            write_png(tmp_path / "high" / f"{stem}.png", np.zeros((8, 8, 3), dtype=np.uint8))
        assert scan_dataset(tmp_path).ids == ["a", "b", "c"]

    def test_missing_root(self, tmp_path):
        with pytest.raises(ValueError, match="does not exist"):
            scan_dataset(tmp_path / "nowhere")

    def test_load_and_subset(self, lol_root):
        index = scan_dataset(lol_root)
        sample = index.load(0)
        assert sample.id == "0"
        assert sample.size == (24, 32)
        assert len(index.subset(2)) == 2


# ── Codec ───────────────────────────────────────────────────────────


class TestImageIO:
    def test_save_load_quantization_bound(self, tmp_path, rng):
        data = rng.uniform(size=(3, 10, 14))
        loaded = load_image(save_image(Tensor(data), tmp_path / "x.png"))
        assert loaded.shape == (3, 10, 14)
        assert np.abs(loaded.data - data).max() <= 1 / 510 + 1e-6

    def test_black_png(self, tmp_path):
        path = write_png(tmp_path / "black.png", np.zeros((5, 7, 3), dtype=np.uint8))
        t = load_image(path)
        assert t.shape == (3, 5, 7)
        assert not t.data.any()

    def test_lol_frame_shape(self, tmp_path):
        path = write_png(tmp_path / "frame.png", np.zeros((400, 600, 3), dtype=np.uint8))
        assert load_image(path).shape == (3, 400, 600)

    def test_grayscale_promoted(self, tmp_path):
        path = write_png(tmp_path / "gray.png", np.full((4, 4), 255, dtype=np.uint8))
        np.testing.assert_allclose(load_image(path).data, 1.0)

    def test_round_half_up(self):
        assert to_uint8(np.array([0.3 / 255, 0.7 / 255, 1.0, -0.2, 1.7])).tolist() == [0, 1, 255, 0, 255]

    def test_unreadable(self, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"not a png")
        with pytest.raises(ImageReadError, match="bad.png"):
            load_image(bad)
        with pytest.raises(ImageReadError, match="not found"):
            load_image(tmp_path / "missing.png")

    def test_save_rejects_bad_shape(self, tmp_path):
        with pytest.raises(ValueError):
            save_image(np.zeros((2, 4, 4)), tmp_path / "x.png")


# ── Samples and transforms ──────────────────────────────────────────


class TestSamples:
    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError, match="differ"):
            PairedSample(Tensor(rng.uniform(size=(3, 4, 4))), Tensor(rng.uniform(size=(3, 4, 5))), "x")

    def test_out_of_range(self):
        with pytest.raises(ValueError, match=r"\[0,1\]"):
            PairedSample(Tensor(np.full((3, 4, 4), 1.5)), Tensor(np.zeros((3, 4, 4))), "x")

    def test_full_size_crop_is_identity(self, rng):
        sample = sample_from(rng, 10, 10)
        crop = random_patch_pair(sample, 10, seed=3)
        np.testing.assert_array_equal(crop.low.data, sample.low.data)
        assert random_patch_pair(sample, None, seed=3) is sample

    def test_crop_deterministic(self, rng):
        sample = sample_from(rng)
        a = random_patch_pair(sample, 8, seed=42)
        b = random_patch_pair(sample, 8, seed=42)
        np.testing.assert_array_equal(a.low.data, b.low.data)
        np.testing.assert_array_equal(a.gt.data, b.gt.data)

    def test_crop_too_large(self, rng):
        with pytest.raises(ValueError, match="does not fit"):
            random_patch_pair(sample_from(rng, 12, 16), 13, seed=0)

    def test_crop_keeps_alignment(self, rng):
        sample = sample_from(rng, 20, 20)
        crop = random_patch_pair(sample, 8, seed=9)
        low = sample.low.data
        matches = [
            (top, left)
            for top in range(13)
            for left in range(13)
            if np.array_equal(low[:, top:top + 8, left:left + 8], crop.low.data)
        ]
        assert len(matches) == 1
        top, left = matches[0]
        assert psnr(crop.low, crop.gt) == pytest.approx(psnr_window(sample.low, sample.gt, top, left, 8))

    def test_flip_applies_to_both(self, rng):
        sample = sample_from(rng)
        flipped = augment(sample, seed=0, p=1.0)
        np.testing.assert_array_equal(flipped.low.data, sample.low.data[:, :, ::-1])
        np.testing.assert_array_equal(flipped.gt.data, sample.gt.data[:, :, ::-1])
        assert augment(sample, seed=0, p=0.0) is sample

    def test_flip_rate(self, rng):
        sample = sample_from(rng)
        flips = sum(augment(sample, seed=s) is not sample for s in range(400))
        assert 140 < flips < 260

    def test_derived_seeds(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)

    def test_epoch_order(self):
        assert sorted(epoch_order(10, seed=0, epoch=1)) == list(range(10))
        assert epoch_order(10, 0, 1) == epoch_order(10, 0, 1)
        assert epoch_order(10, 0, 1) != epoch_order(10, 0, 2)


# ── Loader ──────────────────────────────────────────────────────────


class TestPrefetchLoader:
    def test_yields_in_order(self, lol_root):
        index = scan_dataset(lol_root)
        loader = PrefetchLoader(index, [2, 0, 3, 1], crop=None, train=False)
        assert [s.id for s in loader] == ["2", "0", "3", "1"]

    def test_crops_clamped_to_image(self, lol_root):
        index = scan_dataset(lol_root)
        samples = list(PrefetchLoader(index, range(len(index)), crop=256, seed=1))
        assert all(s.size == (24, 24) for s in samples)

    def test_same_seed_same_samples(self, lol_root):
        index = scan_dataset(lol_root)
        a = list(PrefetchLoader(index, range(4), crop=16, seed=5, epoch=2))
        b = list(PrefetchLoader(index, range(4), crop=16, seed=5, epoch=2))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.low.data, y.low.data)

    def test_skips_unreadable(self, lol_root):
        (lol_root / "low" / "1.png").write_bytes(b"garbage")
        index = scan_dataset(lol_root)
        loader = PrefetchLoader(index, range(len(index)), crop=None, train=False)
        assert [s.id for s in loader] == ["0", "2", "3"]
        assert loader.skipped == ["1"]

    def test_early_close(self, lol_root):
        index = scan_dataset(lol_root)
        loader = PrefetchLoader(index, range(len(index)), crop=8, depth=1)
        for _ in loader:
            break
        loader.close()

    def test_batches(self, rng):
        samples = [sample_from(rng, id=str(i)) for i in range(5)]
        sizes = [len(b) for b in batches(iter(samples), 2)]
        assert sizes == [2, 2, 1]
