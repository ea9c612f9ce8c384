"""Network building blocks: parameter containers, convolution, ResBlock,
squeeze-and-excitation channel attention and the two-branch fusion block."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor, concat_channels, conv2d, global_avg_pool


class Module:
    """Minimal parameter container.

    Parameters are ``Tensor`` attributes with ``requires_grad`` set; child
    modules may be attributes or lists of modules. Names follow attribute
    insertion order, which keeps checkpoints stable.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _param(array: np.ndarray) -> Tensor:
    return Tensor(array, requires_grad=True)


class Conv2d(Module):
    """Same-padded stride-1 convolution with fan-in scaled uniform init."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3, rng=None):
        if kernel_size % 2 == 0:
            raise ConfigError(f"kernel size must be odd, got {kernel_size}")
        rng = np.random.default_rng() if rng is None else rng
        bound = 1.0 / np.sqrt(in_channels * kernel_size * kernel_size)
        self.weight = _param(rng.uniform(-bound, bound, (out_channels, in_channels, kernel_size, kernel_size)))
        self.bias = _param(rng.uniform(-bound, bound, out_channels))

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias)

    def set_identity(self) -> None:
        """Center-tap identity kernel (requires C_in == C_out), zero bias."""
        co, ci, k, _ = self.weight.shape
        if co != ci:
            raise ConfigError("identity kernel needs equal in/out channels")
        self.weight.data[...] = 0.0
        self.weight.data[np.arange(co), np.arange(co), k // 2, k // 2] = 1.0
        self.bias.data[...] = 0.0

    def set_zero(self) -> None:
        self.weight.data[...] = 0.0
        self.bias.data[...] = 0.0


class ChannelAttention(Module):
    """Squeeze-and-excitation gate: ``x * sigmoid(fc2(relu(fc1(gap(x)))))``.

    The two fully connected layers are 1x1 convolutions on the pooled
    ``N x C x 1 x 1`` descriptor, bottlenecked to ``C // reduction``.
    """

    def __init__(self, channels: int, reduction: int = 4, rng=None):
        if reduction < 1 or channels % reduction:
            raise ConfigError(f"reduction {reduction} must divide channel count {channels}")
        self.channels = channels
        self.reduction = reduction
        self.fc1 = Conv2d(channels, channels // reduction, 1, rng=rng)
        self.fc2 = Conv2d(channels // reduction, channels, 1, rng=rng)

    def scale(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(global_avg_pool(x)).relu()).sigmoid()

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"channel attention expects {self.channels} channels, got shape {x.shape}")
        return x * self.scale(x)

    def set_saturated(self, bias: float = 20.0) -> None:
        """Zero the gate's weights and push its output toward 1."""
        self.fc1.set_zero()
        self.fc2.set_zero()
        self.fc2.bias.data[...] = bias


class ResBlock(Module):
    def __init__(self, channels: int, rng=None):
        self.conv1 = Conv2d(channels, channels, 3, rng=rng)
        self.conv2 = Conv2d(channels, channels, 3, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.conv1.in_channels:
            raise ShapeError(f"ResBlock expects {self.conv1.in_channels} channels, got shape {x.shape}")
        return x + self.conv2(self.conv1(x).relu())

    def set_zero(self) -> None:
        self.conv1.set_zero()
        self.conv2.set_zero()


class Fusion(Module):
    """Concatenate two branches, gate the 2C channels, mix back to C with a 1x1 conv."""

    def __init__(self, channels: int, reduction: int = 4, rng=None):
        self.ca = ChannelAttention(2 * channels, reduction, rng=rng)
        self.conv = Conv2d(2 * channels, channels, 1, rng=rng)

    def forward(self, lower: Tensor, upper: Tensor) -> Tensor:
        if lower.shape != upper.shape:
            raise ShapeError(f"fusion branches differ in shape: {lower.shape} vs {upper.shape}")
        return self.conv(self.ca(concat_channels([lower, upper])))

    def set_zero(self) -> None:
        self.conv.set_zero()


def channel_attention(features: Tensor, params: ChannelAttention) -> Tensor:
    return params(features)


def resblock(features: Tensor, params: ResBlock) -> Tensor:
    return params(features)


def fuse_branches(lower: Tensor, upper: Tensor, ca: ChannelAttention, conv: Conv2d) -> Tensor:
    if lower.shape != upper.shape:
        raise ShapeError(f"fusion branches differ in shape: {lower.shape} vs {upper.shape}")
    return conv(ca(concat_channels([lower, upper])))
