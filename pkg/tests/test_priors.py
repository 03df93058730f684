"""Channel priors: pixel and patch dark/bright channels, luminance and the prior stack."""
import numpy as np
import pytest

from src.imaging.priors import (
    PatchSpec,
    bright_channel,
    bright_channel_patch,
    build_prior_stack,
    dark_channel,
    dark_channel_patch,
    luminance_y,
)
from src.tensor.core import Tensor, precision


def naive_patch(plane, r, reducer):
    h, w = plane.shape
    out = np.zeros_like(plane)
    for i in range(h):
        for j in range(w):
            out[i, j] = reducer(plane[max(0, i - r):min(h, i + r + 1), max(0, j - r):min(w, j + r + 1)])
    return out


class TestPixelPriors:
    def test_dark_and_bright_are_channel_extremes(self, image):
        np.testing.assert_array_equal(dark_channel(image).data[0], image.data.min(axis=0))
        np.testing.assert_array_equal(bright_channel(image).data[0], image.data.max(axis=0))

    def test_single_pixel_values(self):
        px = Tensor(np.array([0.2, 0.5, 0.9]).reshape(3, 1, 1))
        assert dark_channel(px).item() == pytest.approx(0.2)
        assert bright_channel(px).item() == pytest.approx(0.9)
        assert luminance_y(px).item() == pytest.approx(0.299 * 0.2 + 0.587 * 0.5 + 0.114 * 0.9, abs=1e-6)

    def test_gray_image_has_equal_planes(self):
        gray = Tensor(np.full((3, 8, 8), 0.37))
        stack = build_prior_stack(gray)
        for plane in (stack.dark, stack.bright, stack.y):
            np.testing.assert_allclose(plane.data, 0.37, atol=1e-6)

    def test_rejects_non_rgb(self):
        with pytest.raises(ValueError):
            dark_channel(Tensor(np.ones((1, 4, 4))))

    @pytest.mark.parametrize("order", [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)])
    def test_extremes_ignore_channel_order(self, image, order):
        shuffled = Tensor(image.data[list(order)])
        np.testing.assert_array_equal(dark_channel(shuffled).data, dark_channel(image).data)
        np.testing.assert_array_equal(bright_channel(shuffled).data, bright_channel(image).data)
        patch = PatchSpec(radius=2)
        np.testing.assert_array_equal(dark_channel_patch(shuffled, patch).data, dark_channel_patch(image, patch).data)

    @pytest.mark.parametrize("delta", [0.01, 0.1, 0.5])
    def test_brightening_never_lowers_a_plane(self, image, delta):
        brighter = Tensor(np.clip(image.data + delta, 0.0, 1.0))
        before, after = build_prior_stack(image), build_prior_stack(brighter)
        for name, plane in before.as_dict().items():
            assert np.all(after.as_dict()[name].data >= plane.data - 1e-7), name
        patch = PatchSpec(radius=1)
        assert np.all(dark_channel_patch(brighter, patch).data >= dark_channel_patch(image, patch).data)
        assert np.all(bright_channel_patch(brighter, patch).data >= bright_channel_patch(image, patch).data)


class TestPatchPriors:
    @pytest.mark.parametrize("radius", [1, 2, 3])
    def test_matches_window_loops(self, rng, radius):
        img = Tensor(rng.uniform(size=(3, 9, 13)))
        patch = PatchSpec(radius=radius)
        dark = img.data.min(axis=0)
        bright = img.data.max(axis=0)
        np.testing.assert_allclose(dark_channel_patch(img, patch).data[0], naive_patch(dark, radius, np.min))
        np.testing.assert_allclose(bright_channel_patch(img, patch).data[0], naive_patch(bright, radius, np.max))

    def test_radius_zero_is_pixel_prior(self, image):
        patch = PatchSpec(radius=0)
        assert patch.size == 1
        np.testing.assert_array_equal(dark_channel_patch(image, patch).data, dark_channel(image).data)

    def test_patch_dark_never_exceeds_pixel_dark(self, image):
        patch = dark_channel_patch(image, PatchSpec(radius=2)).data
        assert np.all(patch <= dark_channel(image).data)

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            PatchSpec(radius=-1)


class TestPriorStack:
    def test_order_and_shape(self, image):
        stack = build_prior_stack(image)
        assert stack.planes.shape == (3,) + image.shape[1:]
        assert list(stack.as_dict()) == ["dark", "bright", "y"]
        np.testing.assert_array_equal(stack.dark.data, dark_channel(image).data)

    def test_luminance_between_dark_and_bright(self, image):
        stack = build_prior_stack(image)
        assert np.all(stack.dark.data <= stack.y.data + 1e-6)
        assert np.all(stack.y.data <= stack.bright.data + 1e-6)

    def test_gradients_flow_to_image(self, rng):
        from src.tensor import ops
        from src.tensor.gradcheck import check_gradients

        with precision(np.float64):
            # well-separated channel values keep the min/max selection stable
            base = np.stack([np.full((4, 5), 0.2), np.full((4, 5), 0.5), np.full((4, 5), 0.8)])
            img = Tensor(base + rng.uniform(-0.05, 0.05, size=base.shape), requires_grad=True)
            w = Tensor(rng.normal(size=(3, 4, 5)))
            assert check_gradients(lambda: ops.sum(build_prior_stack(img).planes * w), {"img": img}) == []
