"""Parameter and FLOP counts for the efficiency table."""
import logging

from src.models.cpga import CpgaNet, low_resolution
from src.models.layers import param_count as _param_count

logger = logging.getLogger(__name__)


def param_count(net: CpgaNet) -> int:
    """Exact number of learnable scalars."""
    return _param_count(net)


def _resize_flops(channels: int, src: tuple[int, int], dst: tuple[int, int]) -> int:
    # two-tap interpolation per axis, rows first
    (_, w), (big_h, big_w) = src, dst
    return channels * (4 * big_h * w + 4 * big_h * big_w)


def _pointwise_flops(net: CpgaNet, height: int, width: int) -> int:
    """Priors, reconstruction, gamma and fusion arithmetic outside the conv layers."""
    cfg = net.config
    hw = height * width
    total = 2 * 3 * hw  # dark and bright reductions
    total += 5 * hw  # luminance
    total += 3 * hw  # Ã sigmoid
    if cfg.t_input != "none":
        total += 3 * hw  # t sigmoid and affine map
        total += 3 * 3 * hw  # (L - Ã)/t + Ã
    if cfg.has_gamma:
        total += 2 * 3 * hw  # clamp and pow
    if cfg.fusion == "iaaf":
        total += 2 * 3 * hw  # R + R^gamma - intersection
    total += 3 * hw  # output clamp
    return total


def _guided_filter_flops(low: tuple[int, int], full: tuple[int, int]) -> int:
    lhw = low[0] * low[1]
    box = 6 * 3 * lhw * 4  # six running-sum box means
    algebra = 8 * 3 * lhw
    lift = 2 * _resize_flops(3, low, full)
    return box + algebra + lift + 2 * 3 * full[0] * full[1]


def flops_estimate(net: CpgaNet, height: int, width: int) -> int:
    """Forward FLOPs at H x W: 2*k^2*C_in*C_out*H'*W' per conv plus pointwise terms.

    DGF nets are counted at their downsampled resolution plus the resize and
    guided-filter lift.
    """
    if not net.config.use_dgf:
        return net.flops(height, width) + _pointwise_flops(net, height, width)
    low = low_resolution(height, width, net.config.dgf_downsample)
    return (
        _resize_flops(3, (height, width), low)
        + net.flops(*low)
        + _pointwise_flops(net, *low)
        + _guided_filter_flops(low, (height, width))
    )
