from __future__ import annotations

import numpy as np

from cnsnet.core import functional as F
from cnsnet.core.module import check_shape
from cnsnet.core.module import kaiming_uniform
from cnsnet.core.module import Module
from cnsnet.core.module import Parameter
from cnsnet.core.tensor import get_default_dtype
from cnsnet.core.tensor import Tensor


class Conv2d(Module):
    weight: Parameter
    bias: Parameter | None

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int | None = None,
        bias: bool = True,
    ) -> None:
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(kaiming_uniform((out_channels, in_channels, kernel_size, kernel_size), fan_in, rng))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def zero_(self) -> Conv2d:
        self.weight.data = np.zeros_like(self.weight.data)
        if self.bias is not None:
            self.bias.data = np.zeros_like(self.bias.data)
        return self


class Linear(Module):
    '''
    acts on the last axis, weight is stored [in, out]
    '''

    weight: Parameter
    bias: Parameter | None

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True) -> None:
        super().__init__()
        self.weight = Parameter(kaiming_uniform((in_features, out_features), in_features, rng))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)

    def zero_(self) -> Linear:
        self.weight.data = np.zeros_like(self.weight.data)
        if self.bias is not None:
            self.bias.data = np.zeros_like(self.bias.data)
        return self


class LayerNorm(Module):
    def __init__(self, features: int, eps: float = 1e-5) -> None:
        super().__init__()
        self.eps = eps
        self.weight = Parameter(np.ones(features))
        self.bias = Parameter(np.zeros(features))

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.weight, self.bias, self.eps)


class BatchNorm2d(Module):
    '''
    normalizes over batch and space with a learnable affine, running
    statistics replace the batch statistics in eval mode
    '''

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1) -> None:
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))
        dtype = get_default_dtype()
        self.register_buffer('running_mean', np.zeros(channels, dtype=dtype))
        self.register_buffer('running_var', np.ones(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        check_shape('BatchNorm2d', x, 4, self.weight.shape[0])
        if self.training:
            batch_mean = x.data.mean(axis=(0, 2, 3))
            batch_var = x.data.var(axis=(0, 2, 3))
            m = self.momentum
            self.set_buffer('running_mean', ((1 - m) * self.running_mean + m * batch_mean).astype(x.dtype))
            self.set_buffer('running_var', ((1 - m) * self.running_var + m * batch_var).astype(x.dtype))
            normed = F.standardize(x, (0, 2, 3), self.eps)
        else:
            scale = 1 / np.sqrt(self.running_var + self.eps)
            normed = F.channel_affine(
                x,
                Tensor(scale, dtype=x.dtype.type),
                Tensor(-self.running_mean * scale, dtype=x.dtype.type),
            )
        return F.channel_affine(normed, self.weight, self.bias)


class ConvBlock(Module):
    '''
    two 3x3 convolutions, each followed by a leaky relu
    '''

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, depth: int = 2) -> None:
        super().__init__()
        self.first = Conv2d(in_channels, out_channels, 3, rng)
        self.second = Conv2d(out_channels, out_channels, 3, rng) if depth > 1 else None

    def forward(self, x: Tensor) -> Tensor:
        x = F.leaky_relu(self.first(x))
        if self.second is not None:
            x = F.leaky_relu(self.second(x))
        return x


__all__ = [
    'BatchNorm2d',
    'Conv2d',
    'ConvBlock',
    'LayerNorm',
    'Linear',
]
