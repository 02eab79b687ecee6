"""
Layers
Parameterised building blocks, weight initialisers and closed-form parameter counts
"""

import logging
from typing import Optional, Sequence

import numpy as np

from . import functional as F
from .module_interface import BaseModule, Parameter
from .tensor import Tensor, get_default_dtype

logger = logging.getLogger(__name__)


# Initialisers

def kaiming_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> np.ndarray:
    """He/Kaiming uniform for ReLU-family layers: U(-sqrt(6/fan_in), sqrt(6/fan_in))"""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=tuple(shape)).astype(get_default_dtype())


def xavier_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=tuple(shape)).astype(get_default_dtype())


def _zeros(*shape: int) -> np.ndarray:
    return np.zeros(shape, dtype=get_default_dtype())


# Closed-form counts

def separable_conv_parameters(k: int, c_in: int, c_out: int, bias: bool = False) -> int:
    return k * k * c_in + c_in * c_out + (c_out if bias else 0)


def dense_conv_parameters(k: int, c_in: int, c_out: int, bias: bool = False) -> int:
    return k * k * c_in * c_out + (c_out if bias else 0)


def conv_output_size(size: int, kernel: int = 3, stride: int = 1) -> int:
    """Spatial size after a "same"-padded convolution"""
    pad = kernel // 2
    return (size + 2 * pad - kernel) // stride + 1


# Layers

class Linear(BaseModule):
    """Affine map on the last axis; doubles as a 1×1 convolution"""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True, zero_init: bool = False):
        super().__init__()
        if zero_init:
            self.weight = Parameter(_zeros(in_features, out_features))
        else:
            self.weight = Parameter(kaiming_uniform(rng, (in_features, out_features), in_features))
        self.bias = Parameter(_zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class DepthwiseConv2d(BaseModule):
    def __init__(self, channels: int, rng: np.random.Generator, kernel_size: int = 3, stride: int = 1):
        super().__init__()
        self.stride = stride
        self.weight = Parameter(kaiming_uniform(rng, (kernel_size, kernel_size, channels), kernel_size * kernel_size))

    def forward(self, x: Tensor) -> Tensor:
        return F.depthwise_conv2d(x, self.weight, stride=self.stride)


class SeparableConv2d(BaseModule):
    """Depthwise k×k convolution followed by a pointwise mix (bias on the pointwise stage only)"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 kernel_size: int = 3, stride: int = 1, bias: bool = True):
        super().__init__()
        self.stride = stride
        self.depthwise = Parameter(kaiming_uniform(rng, (kernel_size, kernel_size, in_channels), kernel_size * kernel_size))
        self.pointwise = Parameter(kaiming_uniform(rng, (in_channels, out_channels), in_channels))
        self.bias = Parameter(_zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.depthwise_separable_conv2d(x, self.depthwise, self.pointwise, self.bias, stride=self.stride)


class Conv2d(BaseModule):
    """Dense k×k convolution"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 kernel_size: int = 3, stride: int = 1, bias: bool = True):
        super().__init__()
        self.stride = stride
        shape = (kernel_size, kernel_size, in_channels, out_channels)
        self.weight = Parameter(kaiming_uniform(rng, shape, kernel_size * kernel_size * in_channels))
        self.bias = Parameter(_zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride)


def conv3x3(in_channels: int, out_channels: int, rng: np.random.Generator,
            separable: bool, stride: int = 1, bias: bool = True) -> BaseModule:
    """3×3 convolution, separable or dense"""
    if separable:
        return SeparableConv2d(in_channels, out_channels, rng, stride=stride, bias=bias)
    return Conv2d(in_channels, out_channels, rng, stride=stride, bias=bias)


class SeparableConv1d(BaseModule):
    """Strided single-channel 1-D separable convolution (K×M depthwise, M×C pointwise)"""

    def __init__(self, kernel_size: int, multiplier: int, out_channels: int, stride: int,
                 rng: np.random.Generator, bias: bool = True, padding: str = "center"):
        super().__init__()
        self.stride, self.padding = stride, padding
        self.depthwise = Parameter(kaiming_uniform(rng, (kernel_size, multiplier), kernel_size))
        self.pointwise = Parameter(kaiming_uniform(rng, (multiplier, out_channels), multiplier))
        self.bias = Parameter(_zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.depthwise_separable_conv1d(
            x, self.depthwise, self.pointwise, self.bias, stride=self.stride, padding=self.padding
        )


class BatchNorm(BaseModule):
    """Batch normalization over all axes but the channel axis"""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = Parameter(np.ones(channels, dtype=get_default_dtype()))
        self.beta = Parameter(_zeros(channels))
        self.register_buffer("running_mean", _zeros(channels))
        self.register_buffer("running_var", np.ones(channels, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(
            x, self.gamma, self.beta,
            running_mean=self.buffer("running_mean"),
            running_var=self.buffer("running_var"),
            training=self.training, momentum=self.momentum, eps=self.eps,
        )


class PReLU(BaseModule):
    def __init__(self, channels: int, init: float = 0.25):
        super().__init__()
        self.slope = Parameter(np.full(channels, init, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return F.prelu(x, self.slope)


class GlobalDepthwiseConv(BaseModule):
    """Collapses an H×W grid with one learned weight per position and channel"""

    def __init__(self, height: int, width: int, channels: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(kaiming_uniform(rng, (height, width, channels), height * width))

    def forward(self, x: Tensor) -> Tensor:
        return F.global_depthwise_conv(x, self.weight)


class GlobalAvgPool(BaseModule):
    def forward(self, x: Tensor) -> Tensor:
        return F.global_avg_pool(x)


class ConvBlock(BaseModule):
    """Convolution, batch norm and an optional PReLU"""

    def __init__(self, conv: BaseModule, channels: int, momentum: float = 0.1,
                 activation: bool = True):
        super().__init__()
        self.conv = conv
        self.bn = BatchNorm(channels, momentum=momentum)
        self.act: Optional[PReLU] = PReLU(channels) if activation else None

    def forward(self, x: Tensor) -> Tensor:
        x = self.bn(self.conv(x))
        return self.act(x) if self.act is not None else x
