"""Differentiable tensor ops: elementwise math, reductions, conv, resampling, box filter.

Binary ops accept equal shapes or a scalar/singleton-broadcastable second
operand. Division, log and pow clamp their denominator/argument/base to at
least ``EPS_SAFE``. Convolution, pooling and filtering accumulate in float64
and round back to the active dtype.
"""
from __future__ import annotations

import logging
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from src.config import EPS_SAFE
from src.tensor.core import Function, Tensor, as_tensor

logger = logging.getLogger(__name__)

Operand = Union[Tensor, float, int, np.ndarray]


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    if a.ndim != b.ndim:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape} (rank {a.ndim} vs {b.ndim})")
    for axis, (m, n) in enumerate(zip(a.shape, b.shape)):
        if m != n and m != 1 and n != 1:
            raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape} (dim {axis}: {m} vs {n})")


def _binary(fn_cls, op: str, a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(op, a, b)
    return fn_cls.apply(a, b)


# ── Elementwise ─────────────────────────────────────────────────────


class Add(Function):
    name = "add"

    def forward(self, a, b):
        return a + b

    def backward(self, g):
        return g, g


class Sub(Function):
    name = "sub"

    def forward(self, a, b):
        return a - b

    def backward(self, g):
        return g, -g


class Mul(Function):
    name = "mul"

    def forward(self, a, b):
        self.saved = (a, b)
        return a * b

    def backward(self, g):
        a, b = self.saved
        return g * b, g * a


class Div(Function):
    name = "div"

    def forward(self, a, b):
        b_safe = np.maximum(b, EPS_SAFE)
        self.saved = (a, b_safe, b >= EPS_SAFE)
        return a / b_safe

    def backward(self, g):
        a, b_safe, live = self.saved
        return g / b_safe, -g * a / (b_safe * b_safe) * live


class Pow(Function):
    name = "pow"

    def forward(self, a, b):
        base = np.maximum(a, EPS_SAFE)
        out = np.power(base, b)
        self.saved = (a >= EPS_SAFE, base, b, out)
        return out

    def backward(self, g):
        live, base, b, out = self.saved
        grad_base = g * b * np.power(base, b - 1) * live
        grad_exp = g * out * np.log(base)
        return grad_base, grad_exp


class Exp(Function):
    name = "exp"

    def forward(self, a):
        out = np.exp(a)
        self.saved = (out,)
        return out

    def backward(self, g):
        (out,) = self.saved
        return (g * out,)


class Log(Function):
    name = "log"

    def forward(self, a):
        safe = np.maximum(a, EPS_SAFE)
        self.saved = (safe, a >= EPS_SAFE)
        return np.log(safe)

    def backward(self, g):
        safe, live = self.saved
        return (g / safe * live,)


class Sigmoid(Function):
    name = "sigmoid"

    def forward(self, a):
        out = expit(a)
        self.saved = (out,)
        return out

    def backward(self, g):
        (out,) = self.saved
        return (g * out * (1.0 - out),)


class Softplus(Function):
    name = "softplus"

    def forward(self, a):
        self.saved = (a,)
        return np.logaddexp(0.0, a)

    def backward(self, g):
        (a,) = self.saved
        return (g * expit(a),)


class Relu(Function):
    name = "relu"

    def forward(self, a):
        self.saved = (a > 0,)
        return np.maximum(a, 0)

    def backward(self, g):
        (mask,) = self.saved
        return (g * mask,)


class Abs(Function):
    name = "abs"

    def forward(self, a):
        self.saved = (np.sign(a),)
        return np.abs(a)

    def backward(self, g):
        # sign(0) == 0 gives the zero subgradient at the kink
        (sign,) = self.saved
        return (g * sign,)


class Square(Function):
    name = "square"

    def forward(self, a):
        self.saved = (a,)
        return a * a

    def backward(self, g):
        (a,) = self.saved
        return (2.0 * g * a,)


class Neg(Function):
    name = "neg"

    def forward(self, a):
        return -a

    def backward(self, g):
        return (-g,)


class Clamp(Function):
    name = "clamp"

    def forward(self, a, lo=None, hi=None):
        self.saved = (((a >= lo) if lo is not None else True) & ((a <= hi) if hi is not None else True),)
        return np.clip(a, lo, hi)

    def backward(self, g):
        (mask,) = self.saved
        return (g * mask,)


def add(a: Operand, b: Operand) -> Tensor:
    return _binary(Add, "add", a, b)


def sub(a: Operand, b: Operand) -> Tensor:
    return _binary(Sub, "sub", a, b)


def mul(a: Operand, b: Operand) -> Tensor:
    return _binary(Mul, "mul", a, b)


def div(a: Operand, b: Operand) -> Tensor:
    return _binary(Div, "div", a, b)


def pow(a: Operand, b: Operand) -> Tensor:  # noqa: A001
    return _binary(Pow, "pow", a, b)


def exp(a: Tensor) -> Tensor:
    return Exp.apply(as_tensor(a))


def log(a: Tensor) -> Tensor:
    return Log.apply(as_tensor(a))


def sigmoid(a: Tensor) -> Tensor:
    return Sigmoid.apply(as_tensor(a))


def softplus(a: Tensor) -> Tensor:
    return Softplus.apply(as_tensor(a))


def relu(a: Tensor) -> Tensor:
    return Relu.apply(as_tensor(a))


def abs(a: Tensor) -> Tensor:  # noqa: A001
    return Abs.apply(as_tensor(a))


def square(a: Tensor) -> Tensor:
    return Square.apply(as_tensor(a))


def neg(a: Tensor) -> Tensor:
    return Neg.apply(as_tensor(a))


def clamp(a: Tensor, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    if lo is None and hi is None:
        raise ValueError("clamp needs at least one bound")
    if lo is not None and hi is not None and lo > hi:
        raise ValueError(f"clamp: lower bound {lo} exceeds upper bound {hi}")
    return Clamp.apply(as_tensor(a), lo=lo, hi=hi)


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul, "div": div, "pow": pow,
    "exp": exp, "log": log, "sigmoid": sigmoid, "relu": relu,
    "softplus": softplus, "abs": abs, "square": square, "neg": neg,
}
_UNARY = {"exp", "log", "sigmoid", "relu", "softplus", "abs", "square", "neg"}


def elementwise(op_kind: str, a: Operand, b: Optional[Operand] = None) -> Tensor:
    """Dispatch a pointwise op by name (``add``, ``pow``, ``sigmoid``, ...)."""
    if op_kind not in _ELEMENTWISE:
        raise ValueError(f"Unknown elementwise op '{op_kind}'")
    if op_kind in _UNARY:
        if b is not None:
            raise ValueError(f"'{op_kind}' is unary but got a second operand")
        return _ELEMENTWISE[op_kind](a)
    if b is None:
        raise ValueError(f"'{op_kind}' needs a second operand")
    return _ELEMENTWISE[op_kind](a, b)


# ── Reductions and shape ops ────────────────────────────────────────


class Sum(Function):
    name = "sum"

    def forward(self, a):
        self.saved = (a.shape,)
        return np.array([a.sum(dtype=np.float64)])

    def backward(self, g):
        (shape,) = self.saved
        return (np.full(shape, g.reshape(-1)[0], dtype=g.dtype),)


class Mean(Function):
    name = "mean"

    def forward(self, a):
        self.saved = (a.shape, a.size)
        return np.array([a.mean(dtype=np.float64)])

    def backward(self, g):
        shape, n = self.saved
        return (np.full(shape, g.reshape(-1)[0] / n, dtype=g.dtype),)


class MeanAxis(Function):
    name = "mean_axis"

    def forward(self, a, axis=0):
        self.saved = (a.shape, axis)
        return a.mean(axis=axis, keepdims=True, dtype=np.float64)

    def backward(self, g):
        shape, axis = self.saved
        return (np.broadcast_to(g / shape[axis], shape).copy(),)


class ExtremeAxis(Function):
    """Max or min along one axis; ties share the gradient equally."""

    name = "extreme_axis"

    def forward(self, a, axis=0, largest=True):
        out = a.max(axis=axis, keepdims=True) if largest else a.min(axis=axis, keepdims=True)
        mask = a == out
        self.saved = (mask, mask.sum(axis=axis, keepdims=True))
        return out

    def backward(self, g):
        mask, count = self.saved
        return (mask * (g / count),)


class GlobalAvgPool(Function):
    name = "global_avg_pool"

    def forward(self, a):
        self.saved = (a.shape,)
        return a.mean(axis=(1, 2), dtype=np.float64)

    def backward(self, g):
        (shape,) = self.saved
        scale = 1.0 / (shape[1] * shape[2])
        return (np.broadcast_to((g * scale)[:, None, None], shape).copy(),)


class GlobalMaxPool(Function):
    name = "global_max_pool"

    def forward(self, a):
        out = a.max(axis=(1, 2))
        mask = a == out[:, None, None]
        self.saved = (mask, mask.sum(axis=(1, 2)))
        return out

    def backward(self, g):
        mask, count = self.saved
        return (mask * (g / count)[:, None, None],)


class Reshape(Function):
    name = "reshape"

    def forward(self, a, shape=()):
        self.saved = (a.shape,)
        return a.reshape(shape)

    def backward(self, g):
        (shape,) = self.saved
        return (g.reshape(shape),)


class Concat(Function):
    name = "concat"

    def forward(self, *arrays, axis=0):
        self.saved = (axis, np.cumsum([a.shape[axis] for a in arrays])[:-1])
        return np.concatenate(arrays, axis=axis)

    def backward(self, g):
        axis, splits = self.saved
        return tuple(np.split(g, splits, axis=axis))


class ChannelMix(Function):
    """out[o] = sum_c w[o, c] * x[c] with a constant mixing matrix."""

    name = "channel_mix"

    def forward(self, a, weights=None):
        self.saved = (weights,)
        return np.tensordot(weights, a.astype(np.float64), axes=([1], [0]))

    def backward(self, g):
        (weights,) = self.saved
        return (np.tensordot(weights.T, g.astype(np.float64), axes=([1], [0])),)


class Linear(Function):
    name = "linear"

    def forward(self, x, w, b):
        x64, w64 = x.astype(np.float64), w.astype(np.float64)
        self.saved = (x64, w64)
        return w64 @ x64 + b

    def backward(self, g):
        x64, w64 = self.saved
        g64 = g.astype(np.float64)
        return w64.T @ g64, np.outer(g64, x64), g


def sum(a: Tensor) -> Tensor:  # noqa: A001
    return Sum.apply(as_tensor(a))


def mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    """Mean over all entries (shape ``(1,)``) or along ``axis`` with keepdims."""
    a = as_tensor(a)
    if axis is None:
        return Mean.apply(a)
    return MeanAxis.apply(a, axis=axis)


def amax(a: Tensor, axis: int = 0) -> Tensor:
    return ExtremeAxis.apply(as_tensor(a), axis=axis, largest=True)


def amin(a: Tensor, axis: int = 0) -> Tensor:
    return ExtremeAxis.apply(as_tensor(a), axis=axis, largest=False)


def _check_chw(op: str, x: Tensor) -> None:
    if x.ndim != 3:
        raise ValueError(f"{op}: expected a [C,H,W] tensor, got shape {x.shape}")


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel arithmetic mean: [C,H,W] -> [C]."""
    _check_chw("global_avg_pool", x)
    if x.shape[1] < 1 or x.shape[2] < 1:
        raise ValueError(f"global_avg_pool: empty spatial extent {x.shape[1:]}")
    return GlobalAvgPool.apply(x)


def global_max_pool(x: Tensor) -> Tensor:
    _check_chw("global_max_pool", x)
    return GlobalMaxPool.apply(x)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.size:
        raise ValueError(f"reshape: cannot view {a.shape} as {shape}")
    return Reshape.apply(a, shape=shape)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref):
            raise ValueError(f"concat: rank mismatch {ref} vs {t.shape}")
        for dim, (m, n) in enumerate(zip(ref, t.shape)):
            if dim != axis and m != n:
                raise ValueError(f"concat: dim {dim} differs ({m} vs {n})")
    return Concat.apply(*tensors, axis=axis)


def channel_mix(x: Tensor, weights: np.ndarray) -> Tensor:
    _check_chw("channel_mix", x)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise ValueError(f"channel_mix: weights {weights.shape} do not match C_in={x.shape[0]}")
    return ChannelMix.apply(x, weights=weights)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Dense layer on a feature vector: [C_in] -> [C_out]."""
    if x.ndim != 1:
        raise ValueError(f"linear: expected a [C_in] vector, got shape {x.shape}")
    if weight.ndim != 2 or weight.shape[1] != x.shape[0]:
        raise ValueError(f"linear: weight {weight.shape} does not match C_in={x.shape[0]}")
    if bias.shape != (weight.shape[0],):
        raise ValueError(f"linear: bias {bias.shape} does not match C_out={weight.shape[0]}")
    return Linear.apply(x, weight, bias)


# ── Convolution ─────────────────────────────────────────────────────


class Conv2d(Function):
    name = "conv2d"

    def forward(self, x, w, b, stride=1, padding=0):
        k = w.shape[-1]
        xp = np.pad(x.astype(np.float64), ((0, 0), (padding, padding), (padding, padding)))
        cols = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
        w64 = w.astype(np.float64)
        self.saved = (xp, w64, stride, padding, cols.shape[1:3], x.shape)
        out = np.tensordot(w64, cols, axes=([1, 2, 3], [0, 3, 4]))
        return out + b.astype(np.float64)[:, None, None]

    def backward(self, g):
        xp, w64, stride, padding, (ho, wo), in_shape = self.saved
        k = w64.shape[-1]
        g64 = g.astype(np.float64)
        cols = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]

        grad_b = g64.sum(axis=(1, 2))
        grad_w = np.tensordot(g64, cols, axes=([1, 2], [1, 2]))

        dcols = np.tensordot(w64, g64, axes=([0], [0]))  # [C_in, k, k, Ho, Wo]
        dxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, i, j]
        h, w = in_shape[1:]
        grad_x = dxp[:, padding:padding + h, padding:padding + w]
        return grad_x, grad_w, grad_b


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of a [C_in,H,W] input with [C_out,C_in,k,k] kernels."""
    _check_chw("conv2d", x)
    if weight.ndim != 4:
        raise ValueError(f"conv2d: weight must be [C_out,C_in,k,k], got shape {weight.shape}")
    c_out, c_in, kh, kw = weight.shape
    if c_in != x.shape[0]:
        raise ValueError(f"conv2d: C_in mismatch, weight expects {c_in} but input has {x.shape[0]}")
    if kh != kw or kh % 2 == 0:
        raise ValueError(f"conv2d: kernel must be square with odd size, got {kh}x{kw}")
    if bias.shape != (c_out,):
        raise ValueError(f"conv2d: bias shape {bias.shape} does not match C_out={c_out}")
    if stride < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"conv2d: padding must be >= 0, got {padding}")
    for dim, size in (("H", x.shape[1]), ("W", x.shape[2])):
        span = size + 2 * padding - kh
        if span < 0:
            raise ValueError(f"conv2d: {dim}={size} too small for kernel {kh} with padding {padding}")
        if span % stride:
            raise ValueError(f"conv2d: {dim}={size} with padding {padding} is not divisible by stride {stride}")
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding)


# ── Resampling and filtering ────────────────────────────────────────


def interpolation_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Bilinear weights [n_out, n_in] with half-pixel-center alignment."""
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(mat, (rows, lo), 1.0 - frac)
    np.add.at(mat, (rows, hi), frac)
    return mat


class ResizeBilinear(Function):
    name = "resize_bilinear"

    def forward(self, x, size=(1, 1)):
        mh = interpolation_matrix(x.shape[1], size[0])
        mw = interpolation_matrix(x.shape[2], size[1])
        self.saved = (mh, mw)
        return mh @ x.astype(np.float64) @ mw.T

    def backward(self, g):
        mh, mw = self.saved
        return (mh.T @ g.astype(np.float64) @ mw,)


def resize_bilinear(x: Tensor, height: int, width: int) -> Tensor:
    _check_chw("resize_bilinear", x)
    if height < 1 or width < 1:
        raise ValueError(f"resize_bilinear: target size must be >= 1, got {height}x{width}")
    if (height, width) == x.shape[1:]:
        return x
    return ResizeBilinear.apply(x, size=(height, width))


def _window_sum(a: np.ndarray, radius: int, axis: int) -> np.ndarray:
    """Sum over the window [i-r, i+r] clipped to bounds, via running sums."""
    n = a.shape[axis]
    csum = np.cumsum(a, axis=axis)
    pad_shape = list(a.shape)
    pad_shape[axis] = 1
    csum = np.concatenate([np.zeros(pad_shape, dtype=csum.dtype), csum], axis=axis)
    idx = np.arange(n)
    hi = np.minimum(idx + radius + 1, n)
    lo = np.maximum(idx - radius, 0)
    return np.take(csum, hi, axis=axis) - np.take(csum, lo, axis=axis)


def window_counts(n: int, radius: int) -> np.ndarray:
    idx = np.arange(n)
    return (np.minimum(idx + radius, n - 1) - np.maximum(idx - radius, 0) + 1).astype(np.float64)


class BoxFilter(Function):
    name = "box_filter"

    def forward(self, x, radius=0):
        counts = np.outer(window_counts(x.shape[1], radius), window_counts(x.shape[2], radius))
        self.saved = (radius, counts)
        total = _window_sum(_window_sum(x.astype(np.float64), radius, 1), radius, 2)
        return total / counts

    def backward(self, g):
        # the clipped window-sum operator is symmetric
        radius, counts = self.saved
        scaled = g.astype(np.float64) / counts
        return (_window_sum(_window_sum(scaled, radius, 1), radius, 2),)


def box_filter(x: Tensor, radius: int) -> Tensor:
    """Edge-normalized mean over the (2r+1)^2 window; cost independent of r."""
    _check_chw("box_filter", x)
    if radius < 0:
        raise ValueError(f"box_filter: radius must be >= 0, got {radius}")
    if radius == 0:
        return x
    return BoxFilter.apply(x, radius=radius)


def mean_of(values: Sequence[Tensor]) -> Tensor:
    if not values:
        raise ValueError("mean_of needs at least one tensor")
    total = values[0]
    for value in values[1:]:
        total = add(total, value)
    return mul(total, 1.0 / len(values))
