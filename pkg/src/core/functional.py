"""
Differentiable Operations
Function subclasses and functional wrappers for every layer kind the detector uses
"""

import logging
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from .errors import ShapeError
from .tensor import Function, Tensor, get_default_dtype

logger = logging.getLogger(__name__)

ARCCOS_EPS = 1e-7

Operand = Union[Tensor, np.ndarray, float, int]


def as_tensor(value: Operand, dtype: Optional[Any] = None) -> Tensor:
    """Wrap constants as non-differentiable tensors"""
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype or get_default_dtype()))


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_shapes_equal(op: str, a: Tuple[int, ...], b: Tuple[int, ...]) -> None:
    if a != b:
        raise ShapeError(f"{op}: shapes differ", left=a, right=b)


# Elementwise arithmetic

class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return _unbroadcast(grad * self.b, self.a.shape), _unbroadcast(grad * self.a, self.b.shape)


def add(a: Operand, b: Operand) -> Tensor:
    a = as_tensor(a)
    return Add.apply(a, as_tensor(b, a.dtype))


def sub(a: Operand, b: Operand) -> Tensor:
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = as_tensor(a, b.dtype)
    a = as_tensor(a)
    return Sub.apply(a, as_tensor(b, a.dtype))


def mul(a: Operand, b: Operand) -> Tensor:
    a = as_tensor(a)
    return Mul.apply(a, as_tensor(b, a.dtype))


# Reductions and shape ops

class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.sum(x, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.array(np.broadcast_to(grad, self.shape)),)


class Mean(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        out = np.mean(x, axis=axis, keepdims=keepdims)
        self.count = x.size // max(np.size(out), 1)
        return out

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.array(np.broadcast_to(grad, self.shape)) / self.count,)


class Reshape(Function):
    def forward(self, x, shape=()):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x):
        return x.T

    def backward(self, grad):
        return (grad.T,)


class Concat(Function):
    def forward(self, *arrays, axis=-1):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


def sum(x: Tensor, axis: Optional[Any] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: Optional[Any] = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: Tensor) -> Tensor:
    return Transpose.apply(x)


def concat(tensors: Sequence[Operand], axis: int = -1) -> Tensor:
    wrapped = [as_tensor(t) for t in tensors]
    return Concat.apply(*wrapped, axis=axis)


# Linear maps

class MatMul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


class Linear(Function):
    """Affine map over the last axis: x @ W + b"""

    def forward(self, x, weight, bias=None):
        self.x, self.weight = x, weight
        self.has_bias = bias is not None
        out = x @ weight
        if bias is not None:
            out = out + bias
        return out

    def backward(self, grad):
        d_in, d_out = self.weight.shape
        flat_x = self.x.reshape(-1, d_in)
        flat_g = grad.reshape(-1, d_out)
        grads = [grad @ self.weight.T, flat_x.T @ flat_g]
        if self.has_bias:
            grads.append(flat_g.sum(axis=0))
        return tuple(grads)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul: inner dimensions disagree", left=a.shape, right=b.shape)
    return MatMul.apply(a, b)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Affine map ``x @ weight + bias`` over the last axis of ``x``.

    Also serves as the 1×1 (pointwise) convolution on channels-last maps.
    """
    x = as_tensor(x)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError("linear: input features do not match weights", input=x.shape, weights=weight.shape)
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError("linear: bias does not match weights", bias=bias.shape, weights=weight.shape)
    if bias is None:
        return Linear.apply(x, weight)
    return Linear.apply(x, weight, bias)


# Convolutions (channels-last: N×T×F×C)

def _conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _padding_amount(kernel: int, padding: str) -> int:
    if padding == "same":
        return kernel // 2
    if padding == "valid":
        return 0
    raise ShapeError(f"Unknown padding mode: {padding}", padding=padding)


class DepthwiseConv2d(Function):
    def forward(self, x, kernel, stride=1, pad=0):
        k = kernel.shape[0]
        n, h, w, c = x.shape
        self.in_shape, self.kernel, self.stride, self.pad = x.shape, kernel, stride, pad
        self.xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        self.h_out = _conv_output_size(h, k, stride, pad)
        self.w_out = _conv_output_size(w, k, stride, pad)
        out = np.zeros((n, self.h_out, self.w_out, c), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                out += self._window(i, j) * kernel[i, j]
        return out

    def _window(self, i: int, j: int) -> np.ndarray:
        s = self.stride
        return self.xp[:, i:i + s * (self.h_out - 1) + 1:s, j:j + s * (self.w_out - 1) + 1:s, :]

    def backward(self, grad):
        k = self.kernel.shape[0]
        s, p = self.stride, self.pad
        grad_xp = np.zeros_like(self.xp)
        grad_kernel = np.zeros_like(self.kernel)
        for i in range(k):
            for j in range(k):
                grad_kernel[i, j] = np.sum(self._window(i, j) * grad, axis=(0, 1, 2))
                grad_xp[:, i:i + s * (self.h_out - 1) + 1:s, j:j + s * (self.w_out - 1) + 1:s, :] += grad * self.kernel[i, j]
        _, h, w, _ = self.in_shape
        return grad_xp[:, p:p + h, p:p + w, :], grad_kernel


class Conv2d(Function):
    """Dense k×k convolution; kernel shape k×k×C_in×C_out"""

    def forward(self, x, kernel, stride=1, pad=0):
        k = kernel.shape[0]
        n, h, w, _ = x.shape
        self.in_shape, self.kernel, self.stride, self.pad = x.shape, kernel, stride, pad
        self.xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        self.h_out = _conv_output_size(h, k, stride, pad)
        self.w_out = _conv_output_size(w, k, stride, pad)
        out = np.zeros((n, self.h_out, self.w_out, kernel.shape[3]), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                out += self._window(i, j) @ kernel[i, j]
        return out

    def _window(self, i: int, j: int) -> np.ndarray:
        s = self.stride
        return self.xp[:, i:i + s * (self.h_out - 1) + 1:s, j:j + s * (self.w_out - 1) + 1:s, :]

    def backward(self, grad):
        k, _, c_in, c_out = self.kernel.shape
        s, p = self.stride, self.pad
        grad_xp = np.zeros_like(self.xp)
        grad_kernel = np.zeros_like(self.kernel)
        flat_g = grad.reshape(-1, c_out)
        for i in range(k):
            for j in range(k):
                grad_kernel[i, j] = self._window(i, j).reshape(-1, c_in).T @ flat_g
                grad_xp[:, i:i + s * (self.h_out - 1) + 1:s, j:j + s * (self.w_out - 1) + 1:s, :] += grad @ self.kernel[i, j].T
        _, h, w, _ = self.in_shape
        return grad_xp[:, p:p + h, p:p + w, :], grad_kernel


def _as_batch(x: Tensor, ndim: int) -> Tuple[Tensor, bool]:
    if x.ndim == ndim - 1:
        return reshape(x, (1,) + x.shape), True
    return x, False


def depthwise_conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """
    Per-channel k×k convolution.

    Args:
        x: Input of shape (N,) t×f×C or t×f×C
        kernel: Depthwise kernels k×k×C
        stride: Positive stride applied to both spatial axes
        padding: "same" (symmetric zero padding of k//2) or "valid"
    """
    x = as_tensor(x)
    x, squeeze = _as_batch(x, 4)
    k = kernel.shape[0]
    if kernel.ndim != 3 or kernel.shape[1] != k or k % 2 == 0:
        raise ShapeError("depthwise kernel must be k×k×C with odd k", kernel=kernel.shape)
    if x.shape[-1] != kernel.shape[-1]:
        raise ShapeError("depthwise kernel channels differ from input channels", input=x.shape, kernel=kernel.shape)
    if stride <= 0:
        raise ShapeError("stride must be positive", stride=stride)
    out = DepthwiseConv2d.apply(x, kernel, stride=stride, pad=_padding_amount(k, padding))
    return reshape(out, out.shape[1:]) if squeeze else out


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: str = "same") -> Tensor:
    """Dense k×k convolution with kernel k×k×C_in×C_out"""
    x = as_tensor(x)
    x, squeeze = _as_batch(x, 4)
    k = kernel.shape[0]
    if kernel.ndim != 4 or kernel.shape[1] != k or k % 2 == 0:
        raise ShapeError("dense kernel must be k×k×C_in×C_out with odd k", kernel=kernel.shape)
    if x.shape[-1] != kernel.shape[2]:
        raise ShapeError("dense kernel channels differ from input channels", input=x.shape, kernel=kernel.shape)
    if stride <= 0:
        raise ShapeError("stride must be positive", stride=stride)
    out = Conv2d.apply(x, kernel, stride=stride, pad=_padding_amount(k, padding))
    if bias is not None:
        out = add(out, bias)
    return reshape(out, out.shape[1:]) if squeeze else out


def depthwise_separable_conv2d(
    x: Tensor,
    depthwise_kernels: Tensor,
    pointwise_kernels: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: str = "same",
) -> Tensor:
    """Depthwise k×k convolution followed by a pointwise C_in×C_out channel mix"""
    if depthwise_kernels.shape[-1] != pointwise_kernels.shape[0]:
        raise ShapeError(
            "pointwise kernels do not match depthwise channels",
            depthwise=depthwise_kernels.shape,
            pointwise=pointwise_kernels.shape,
        )
    hidden = depthwise_conv2d(x, depthwise_kernels, stride=stride, padding=padding)
    return linear(hidden, pointwise_kernels, bias)


class ReflectPad1d(Function):
    def forward(self, x, pad=0):
        self.length, self.pad = x.shape[-1], pad
        widths = [(0, 0)] * (x.ndim - 1) + [(pad, pad)]
        return np.pad(x, widths, mode="reflect")

    def backward(self, grad):
        index = np.pad(np.arange(self.length), self.pad, mode="reflect")
        flat = grad.reshape(-1, grad.shape[-1])
        out = np.zeros((flat.shape[0], self.length), dtype=grad.dtype)
        np.add.at(out, (slice(None), index), flat)
        return (out.reshape(grad.shape[:-1] + (self.length,)),)


class FrameConv1d(Function):
    """Strided single-input-channel 1-D convolution; kernel K×M, output N×T×M"""

    def forward(self, x, kernel, stride=1):
        k = kernel.shape[0]
        self.length, self.stride, self.kernel = x.shape[-1], stride, kernel
        n_frames = (self.length - k) // stride + 1
        self.index = np.arange(n_frames)[:, None] * stride + np.arange(k)[None, :]
        self.frames = x[:, self.index]
        return self.frames @ kernel

    def backward(self, grad):
        k, m = self.kernel.shape
        grad_kernel = self.frames.reshape(-1, k).T @ grad.reshape(-1, m)
        grad_frames = grad @ self.kernel.T
        grad_x = np.zeros((grad.shape[0], self.length), dtype=grad.dtype)
        for t in range(grad_frames.shape[1]):
            start = t * self.stride
            grad_x[:, start:start + k] += grad_frames[:, t, :]
        return grad_x, grad_kernel


def reflect_pad1d(x: Tensor, pad: int) -> Tensor:
    if pad <= 0:
        return x
    if x.shape[-1] <= pad:
        raise ShapeError("reflect padding needs more samples than the pad width", length=x.shape[-1], pad=pad)
    return ReflectPad1d.apply(x, pad=pad)


def depthwise_separable_conv1d(
    x: Tensor,
    depthwise_kernels: Tensor,
    pointwise_kernels: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: str = "center",
) -> Tensor:
    """
    Strided separable 1-D convolution over a single-channel signal.

    Args:
        x: Signal of shape l, 1×l or N×l
        depthwise_kernels: K×M kernels (channel multiplier M)
        pointwise_kernels: M×C_out channel mix
        bias: Optional C_out bias on the pointwise stage
        stride: Hop between frames
        padding: "center" (reflect K//2 each side, matching STFT framing) or "valid"

    Returns:
        Tensor N×T×C_out (or T×C_out for an unbatched signal)
    """
    x = as_tensor(x)
    squeeze = x.ndim == 1
    if squeeze:
        x = reshape(x, (1, x.shape[0]))
    k = depthwise_kernels.shape[0]
    if stride <= 0:
        raise ShapeError("stride must be positive", stride=stride)
    if depthwise_kernels.ndim != 2 or depthwise_kernels.shape[1] != pointwise_kernels.shape[0]:
        raise ShapeError(
            "depthwise and pointwise kernels disagree",
            depthwise=depthwise_kernels.shape,
            pointwise=pointwise_kernels.shape,
        )
    if padding == "center":
        x = reflect_pad1d(x, k // 2)
    elif padding != "valid":
        raise ShapeError(f"Unknown padding mode: {padding}", padding=padding)
    if k > x.shape[-1]:
        raise ShapeError("kernel longer than padded input", kernel=k, padded_length=x.shape[-1])
    frames = FrameConv1d.apply(x, depthwise_kernels, stride=stride)
    out = linear(frames, pointwise_kernels, bias)
    return reshape(out, out.shape[1:]) if squeeze else out


# Normalization

class BatchNorm(Function):
    """Normalizes over every axis except the last (channel) axis"""

    def forward(self, x, gamma, beta, running_mean=None, running_var=None,
                training=True, momentum=0.1, eps=1e-5):
        axes = tuple(range(x.ndim - 1))
        self.training, self.gamma = training, gamma
        if training:
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            count = x.size // x.shape[-1]
            if running_mean is not None:
                unbiased = var * count / (count - 1) if count > 1 else var
                running_mean[...] = (1 - momentum) * running_mean + momentum * mu
                running_var[...] = (1 - momentum) * running_var + momentum * unbiased
        else:
            mu, var = running_mean, running_var
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = (x - mu) * self.inv_std
        return gamma * self.x_hat + beta

    def backward(self, grad):
        axes = tuple(range(grad.ndim - 1))
        grad_gamma = np.sum(grad * self.x_hat, axis=axes)
        grad_beta = np.sum(grad, axis=axes)
        g_hat = grad * self.gamma
        if not self.training:
            return g_hat * self.inv_std, grad_gamma, grad_beta
        count = grad.size // grad.shape[-1]
        grad_x = (self.inv_std / count) * (
            count * g_hat
            - np.sum(g_hat, axis=axes)
            - self.x_hat * np.sum(g_hat * self.x_hat, axis=axes)
        )
        return grad_x, grad_gamma, grad_beta


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Optional[np.ndarray] = None,
    running_var: Optional[np.ndarray] = None,
    training: bool = True,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """
    Per-channel batch normalization.

    Training mode normalizes with batch statistics and updates the running
    arrays in place (exponential moving average, unbiased variance); eval
    mode uses the running arrays.
    """
    if x.shape[-1] != gamma.shape[0]:
        raise ShapeError("batch_norm: channel count differs from gamma", input=x.shape, gamma=gamma.shape)
    if not training and (running_mean is None or running_var is None):
        raise ShapeError("batch_norm: eval mode needs running statistics")
    return BatchNorm.apply(
        x, gamma, beta,
        running_mean=running_mean, running_var=running_var,
        training=training, momentum=momentum, eps=eps,
    )


# Activations

class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, grad):
        return (grad * self.mask,)


class PReLU(Function):
    def forward(self, x, slope):
        self.x, self.slope = x, slope
        self.mask = x > 0
        return np.where(self.mask, x, slope * x)

    def backward(self, grad):
        axes = tuple(range(grad.ndim - 1))
        grad_x = np.where(self.mask, grad, self.slope * grad)
        grad_slope = np.sum(np.where(self.mask, 0, self.x * grad), axis=axes)
        return grad_x, grad_slope


class Sigmoid(Function):
    def forward(self, x):
        self.out = special.expit(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1 - self.out),)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    if slope.shape != (x.shape[-1],):
        raise ShapeError("prelu: one slope per channel expected", input=x.shape, slope=slope.shape)
    return PReLU.apply(x, slope)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(as_tensor(x))


# Angular ops

class SafeArccos(Function):
    def forward(self, x, eps=ARCCOS_EPS):
        self.inside = (x > -1 + eps) & (x < 1 - eps)
        self.clamped = np.clip(x, -1 + eps, 1 - eps)
        return np.arccos(self.clamped)

    def backward(self, grad):
        local = -1.0 / np.sqrt(1.0 - self.clamped ** 2)
        return (grad * local * self.inside,)


class Cos(Function):
    def forward(self, x):
        self.x = x
        return np.cos(x)

    def backward(self, grad):
        return (-grad * np.sin(self.x),)


class LogSoftmax(Function):
    def forward(self, x, axis=-1):
        self.axis = axis
        self.out = special.log_softmax(x, axis=axis)
        return self.out

    def backward(self, grad):
        softmax = np.exp(self.out)
        return (grad - softmax * np.sum(grad, axis=self.axis, keepdims=True),)


class L2Normalize(Function):
    def forward(self, x, axis=-1, eps=1e-12):
        self.x, self.axis = x, axis
        self.norm = np.sqrt(np.sum(x * x, axis=axis, keepdims=True) + eps)
        return x / self.norm

    def backward(self, grad):
        dot = np.sum(grad * self.x, axis=self.axis, keepdims=True)
        return (grad / self.norm - self.x * dot / self.norm ** 3,)


def safe_arccos(x: Tensor, eps: float = ARCCOS_EPS) -> Tensor:
    """arccos with inputs clamped to [-1+eps, 1-eps]; gradient is zero outside the clamp"""
    return SafeArccos.apply(as_tensor(x), eps=eps)


def cos(x: Tensor) -> Tensor:
    return Cos.apply(as_tensor(x))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(as_tensor(x), axis=axis)


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    return L2Normalize.apply(as_tensor(x), axis=axis, eps=eps)


# Pooling

class GlobalDepthwiseConv(Function):
    """Per-channel weighted sum over the whole spatial grid; kernel H×W×C"""

    def forward(self, x, kernel):
        self.x, self.kernel = x, kernel
        return np.einsum("nhwc,hwc->nc", x, kernel)

    def backward(self, grad):
        grad_x = grad[:, None, None, :] * self.kernel
        grad_kernel = np.einsum("nhwc,nc->hwc", self.x, grad)
        return grad_x, grad_kernel


def global_depthwise_conv(x: Tensor, kernel: Tensor) -> Tensor:
    if x.ndim != 4 or x.shape[1:] != kernel.shape:
        raise ShapeError("global depthwise kernel must cover the whole grid", input=x.shape, kernel=kernel.shape)
    return GlobalDepthwiseConv.apply(x, kernel)


def global_avg_pool(x: Tensor) -> Tensor:
    """N×H×W×C -> N×C"""
    if x.ndim != 4:
        raise ShapeError("global_avg_pool expects N×H×W×C", input=x.shape)
    return mean(x, axis=(1, 2))
