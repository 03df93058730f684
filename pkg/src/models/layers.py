"""Trainable building blocks: conv, linear, ResBlock, CBAM attention, ResCBAM."""
import logging
from abc import ABC, abstractmethod
from typing import Iterator

import numpy as np

from src.config import CBAM_REDUCTION, SPATIAL_ATTENTION_KERNEL
from src.tensor import ops
from src.tensor.core import Tensor

logger = logging.getLogger(__name__)


class Module(ABC):
    """Base class for layers with named parameters and child modules.

    Attribute assignment registers ``Tensor`` parameters (requires_grad) and
    child ``Module`` objects in definition order; names are dotted paths such
    as ``a_branch.body.0.conv1.weight``.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    @abstractmethod
    def __call__(self, x: Tensor) -> Tensor:
        """Run the layer on one [C,H,W] (or [C]) tensor."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, param in self._params.items():
            yield f"{prefix}{name}", param
        for name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def children(self) -> Iterator["Module"]:
        return iter(self._children.values())

    def flops(self, height: int, width: int) -> int:
        """Forward FLOPs at the given spatial size (children summed by default)."""
        return sum(child.flops(height, width) for child in self.children())


def kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> Tensor:
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros(shape: tuple) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel_size: int, rng: np.random.Generator):
        super().__init__()
        self.c_in, self.c_out, self.kernel_size = c_in, c_out, kernel_size
        self.padding = kernel_size // 2
        self.weight = kaiming_uniform(rng, (c_out, c_in, kernel_size, kernel_size), c_in * kernel_size ** 2)
        self.bias = zeros((c_out,))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=1, padding=self.padding)

    def flops(self, height: int, width: int) -> int:
        k2 = self.kernel_size ** 2
        return 2 * k2 * self.c_in * self.c_out * height * width + self.c_out * height * width


class Linear(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.weight = kaiming_uniform(rng, (c_out, c_in), c_in)
        self.bias = zeros((c_out,))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)

    def flops(self, height: int, width: int) -> int:
        return 2 * self.c_in * self.c_out + self.c_out


class ConvRelu(Module):
    """Plain conv + ReLU, the non-residual stand-in used by ablations."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv = Conv2d(channels, channels, 3, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.relu(self.conv(x))

    def flops(self, height: int, width: int) -> int:
        return super().flops(height, width) + self.conv.c_out * height * width


class ResBlock(Module):
    """x + conv(relu(conv(x)))."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.channels = channels
        self.conv1 = Conv2d(channels, channels, 3, rng)
        self.conv2 = Conv2d(channels, channels, 3, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.conv2(ops.relu(self.conv1(x)))

    def flops(self, height: int, width: int) -> int:
        return super().flops(height, width) + 2 * self.channels * height * width


class ChannelAttention(Module):
    """Shared MLP over average- and max-pooled descriptors, sigmoid-gated per channel."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = CBAM_REDUCTION):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.channels = channels
        self.fc1 = Linear(channels, hidden, rng)
        self.fc2 = Linear(hidden, channels, rng)

    def _mlp(self, v: Tensor) -> Tensor:
        return self.fc2(ops.relu(self.fc1(v)))

    def __call__(self, x: Tensor) -> Tensor:
        logits = self._mlp(ops.global_avg_pool(x)) + self._mlp(ops.global_max_pool(x))
        return ops.reshape(ops.sigmoid(logits), (self.channels, 1, 1))

    def flops(self, height: int, width: int) -> int:
        pooling = 2 * self.channels * height * width
        return pooling + 2 * (self.fc1.flops(1, 1) + self.fc2.flops(1, 1))


class SpatialAttention(Module):
    """Sigmoid map from a conv over the channel-mean and channel-max planes."""

    def __init__(self, rng: np.random.Generator, kernel_size: int = SPATIAL_ATTENTION_KERNEL):
        super().__init__()
        self.conv = Conv2d(2, 1, kernel_size, rng)

    def __call__(self, x: Tensor) -> Tensor:
        pooled = ops.concat([ops.mean(x, axis=0), ops.amax(x, axis=0)], axis=0)
        return ops.sigmoid(self.conv(pooled))

    def flops(self, height: int, width: int) -> int:
        return super().flops(height, width) + 4 * height * width


class ResCBAM(Module):
    """ResBlock whose body output is reweighted by channel then spatial attention."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = CBAM_REDUCTION):
        super().__init__()
        self.channels = channels
        self.conv1 = Conv2d(channels, channels, 3, rng)
        self.conv2 = Conv2d(channels, channels, 3, rng)
        self.channel_attention = ChannelAttention(channels, rng, reduction)
        self.spatial_attention = SpatialAttention(rng)

    def __call__(self, x: Tensor) -> Tensor:
        body = self.conv2(ops.relu(self.conv1(x)))
        body = body * self.channel_attention(body)
        body = body * self.spatial_attention(body)
        return ops.relu(x + body)

    def flops(self, height: int, width: int) -> int:
        return super().flops(height, width) + 5 * self.channels * height * width


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        for i, layer in enumerate(layers):
            setattr(self, str(i), layer)

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.children():
            x = layer(x)
        return x


def freeze(module: Module) -> Module:
    """Stop gradient tracking on every parameter (teacher networks, inference)."""
    for param in module.parameters().values():
        param.requires_grad = False
        param.zero_grad()
    return module


def param_count(module: Module) -> int:
    return sum(p.size for p in module.parameters().values())


def load_weights(module: Module, weights: dict, strict: bool = True) -> None:
    """Copy named arrays into the module's parameters."""
    params = module.parameters()
    missing = sorted(set(params) - set(weights))
    unexpected = sorted(set(weights) - set(params))
    if strict and (missing or unexpected):
        raise KeyError(f"weight names differ: missing={missing}, unexpected={unexpected}")
    for name, param in params.items():
        if name not in weights:
            continue
        arr = np.asarray(weights[name])
        if arr.shape != param.shape:
            raise ValueError(f"'{name}': checkpoint shape {arr.shape} != parameter shape {param.shape}")
        param.data[...] = arr.astype(param.data.dtype)


def state_dict(module: Module) -> dict:
    return {name: p.data.copy() for name, p in module.parameters().items()}
