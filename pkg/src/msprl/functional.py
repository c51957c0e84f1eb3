"""Differentiable tensor operations used by the restoration network and its losses

Each operation is a `Function` subclass with a thin validating wrapper. Apart
from the bias inside `conv2d`, no broadcasting is supported: elementwise
operands must have identical shapes.
"""
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .exceptions import ShapeError
from .fourier import dft2
from .tensor import Function, Tensor

ACTIVATIONS = ("relu", "leaky_relu", "gelu")
LEAKY_SLOPE = 0.2

Grads = Tuple[Optional[np.ndarray], ...]


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _require_nchw(op: str, x: Tensor) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected an NCHW tensor, got shape {x.shape}")


class Add(Function):
    """Elementwise sum"""

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a + b

    def backward(self, grad: np.ndarray) -> Grads:
        return grad, grad


class Sub(Function):
    """Elementwise difference"""

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a - b

    def backward(self, grad: np.ndarray) -> Grads:
        return grad, -grad


class Mul(Function):
    """Elementwise product"""

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a * b

    def backward(self, grad: np.ndarray) -> Grads:
        a, b = (t.data for t in self.inputs)
        return grad * b, grad * a


class Scale(Function):
    """Multiplication by a constant"""

    def forward(self, x: np.ndarray, factor: float = 1.0) -> np.ndarray:
        self.factor = factor
        return x * x.dtype.type(factor)

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * grad.dtype.type(self.factor),)


class Abs(Function):
    """Elementwise absolute value, subgradient 0 at 0"""

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.abs(x)

    def backward(self, grad: np.ndarray) -> Grads:
        return (grad * np.sign(self.inputs[0].data),)


class Sum(Function):
    """Sum of all elements"""

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(np.sum(x), dtype=x.dtype)

    def backward(self, grad: np.ndarray) -> Grads:
        return (np.full(self.inputs[0].shape, grad, dtype=grad.dtype),)


class Mean(Function):
    """Arithmetic mean of all elements"""

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(np.sum(x) / x.size, dtype=x.dtype)

    def backward(self, grad: np.ndarray) -> Grads:
        x = self.inputs[0]
        return (np.full(x.shape, grad / x.size, dtype=grad.dtype),)


class Activation(Function):
    """ReLU, leaky ReLU (slope 0.2) or exact GELU"""

    def forward(self, x: np.ndarray, kind: str = "relu") -> np.ndarray:
        self.kind = kind
        if kind == "relu":
            return np.maximum(x, 0)
        if kind == "leaky_relu":
            return np.where(x > 0, x, x * x.dtype.type(LEAKY_SLOPE))
        assert kind == "gelu"
        return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))

    def backward(self, grad: np.ndarray) -> Grads:
        x = self.inputs[0].data
        if self.kind == "relu":
            return (grad * (x > 0),)
        if self.kind == "leaky_relu":
            return (grad * np.where(x > 0, 1.0, LEAKY_SLOPE),)
        cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        return (grad * (cdf + x * pdf),)


class Conv2d(Function):
    """Zero-padded 2-D cross-correlation with per-channel bias"""

    def forward(
        self,
        x: np.ndarray,
        weight: np.ndarray,
        bias: np.ndarray,
        stride: int = 1,
        padding: int = 0,
    ) -> np.ndarray:
        self.stride = stride
        self.padding = padding
        if padding:
            x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        kernel = weight.shape[-1]
        windows = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
        self.windows = windows
        out = np.tensordot(windows, weight, axes=([1, 4, 5], [1, 2, 3]))
        return out.transpose(0, 3, 1, 2) + bias[None, :, None, None]

    def backward(self, grad: np.ndarray) -> Grads:
        x, weight, _ = (t.data for t in self.inputs)
        stride, padding = self.stride, self.padding
        kernel = weight.shape[-1]
        out_h, out_w = grad.shape[2:]

        grad_bias = grad.sum(axis=(0, 2, 3))
        grad_weight = np.tensordot(grad, self.windows, axes=([0, 2, 3], [0, 2, 3]))

        batch, channels, height, width = x.shape
        grad_padded = np.zeros(
            (batch, channels, height + 2 * padding, width + 2 * padding), dtype=grad.dtype
        )
        for i in range(kernel):
            for j in range(kernel):
                contrib = np.tensordot(grad, weight[:, :, i, j], axes=([1], [0]))
                grad_padded[
                    :,
                    :,
                    i : i + stride * (out_h - 1) + 1 : stride,
                    j : j + stride * (out_w - 1) + 1 : stride,
                ] += contrib.transpose(0, 3, 1, 2)
        grad_input = grad_padded[:, :, padding : padding + height, padding : padding + width]
        return grad_input, grad_weight, grad_bias


class ConcatChannels(Function):
    """Concatenation along the channel axis"""

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.split = a.shape[1]
        return np.concatenate([a, b], axis=1)

    def backward(self, grad: np.ndarray) -> Grads:
        return grad[:, : self.split], grad[:, self.split :]


def _space_to_depth(x: np.ndarray, factor: int) -> np.ndarray:
    batch, channels, height, width = x.shape
    blocks = x.reshape(batch, channels, height // factor, factor, width // factor, factor)
    # channel index = c * factor**2 + dy * factor + dx
    blocks = blocks.transpose(0, 1, 3, 5, 2, 4)
    return blocks.reshape(batch, channels * factor * factor, height // factor, width // factor)


def _depth_to_space(x: np.ndarray, factor: int) -> np.ndarray:
    batch, channels, height, width = x.shape
    out_channels = channels // (factor * factor)
    blocks = x.reshape(batch, out_channels, factor, factor, height, width)
    blocks = blocks.transpose(0, 1, 4, 2, 5, 3)
    return blocks.reshape(batch, out_channels, height * factor, width * factor)


class PixelUnshuffle(Function):
    """Space-to-depth rearrangement"""

    def forward(self, x: np.ndarray, factor: int = 2) -> np.ndarray:
        self.factor = factor
        return _space_to_depth(x, factor)

    def backward(self, grad: np.ndarray) -> Grads:
        return (_depth_to_space(grad, self.factor),)


class PixelShuffle(Function):
    """Depth-to-space rearrangement"""

    def forward(self, x: np.ndarray, factor: int = 2) -> np.ndarray:
        self.factor = factor
        return _depth_to_space(x, factor)

    def backward(self, grad: np.ndarray) -> Grads:
        return (_space_to_depth(grad, self.factor),)


def interpolation_matrix(in_size: int, out_size: int, dtype=np.float64) -> np.ndarray:
    """Row i holds the bilinear weights of output sample i over the input samples.

    Half-pixel centres: source = (i + 0.5) * in_size / out_size - 0.5, clamped to
    the valid range.
    """
    scale = in_size / out_size
    source = (np.arange(out_size) + 0.5) * scale - 0.5
    source = np.clip(source, 0.0, in_size - 1)
    lower = np.floor(source).astype(np.int64)
    upper = np.minimum(lower + 1, in_size - 1)
    frac = source - lower
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lower), 1.0 - frac)
    np.add.at(matrix, (rows, upper), frac)
    return matrix.astype(dtype)


class BilinearResize(Function):
    """Separable bilinear resampling as two interpolation matrices"""

    def forward(self, x: np.ndarray, out_h: int = 1, out_w: int = 1) -> np.ndarray:
        self.rows = interpolation_matrix(x.shape[2], out_h, x.dtype)
        self.cols = interpolation_matrix(x.shape[3], out_w, x.dtype)
        return self.rows @ x @ self.cols.T

    def backward(self, grad: np.ndarray) -> Grads:
        return (self.rows.T @ grad @ self.cols,)


class Fft2d(Function):
    """Unnormalised 2-D DFT; output stacks real and imaginary parts on a new axis 0"""

    def forward(self, x: np.ndarray) -> np.ndarray:
        spectrum = dft2(x)
        return np.stack([spectrum.real, spectrum.imag])

    def backward(self, grad: np.ndarray) -> Grads:
        # the real input sees Re(F(g_re - i*g_im)) for a symmetric transform F
        return (dft2(grad[0] - 1j * grad[1]).real,)


class Select(Function):
    """Entry `index` of the leading axis"""

    def forward(self, x: np.ndarray, index: int = 0) -> np.ndarray:
        self.index = index
        return x[index]

    def backward(self, grad: np.ndarray) -> Grads:
        full = np.zeros(self.inputs[0].shape, dtype=grad.dtype)
        full[self.index] = grad
        return (full,)


class PadTo(Function):
    """Zero padding at the bottom and right edges"""

    def forward(self, x: np.ndarray, height: int = 0, width: int = 0) -> np.ndarray:
        pad_h = height - x.shape[2]
        pad_w = width - x.shape[3]
        return np.pad(x, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)))

    def backward(self, grad: np.ndarray) -> Grads:
        height, width = self.inputs[0].shape[2:]
        return (grad[:, :, :height, :width],)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a + b"""
    _require_same_shape("add", a, b)
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a - b"""
    _require_same_shape("sub", a, b)
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a * b"""
    _require_same_shape("mul", a, b)
    return Mul.apply(a, b)


def scale(x: Tensor, factor: float) -> Tensor:
    """x * factor for a Python scalar factor"""
    return Scale.apply(x, factor=float(factor))


def absolute(x: Tensor) -> Tensor:
    """Elementwise |x|"""
    return Abs.apply(x)


def total(x: Tensor) -> Tensor:
    """Scalar sum of every element"""
    return Sum.apply(x)


def mean(x: Tensor) -> Tensor:
    """Scalar mean of every element"""
    if x.size == 0:
        raise ShapeError("mean of an empty tensor")
    return Mean.apply(x)


def activation(x: Tensor, kind: str = "relu") -> Tensor:
    """Elementwise nonlinearity: relu, leaky_relu or gelu"""
    if kind not in ACTIVATIONS:
        raise ValueError(f"unknown activation '{kind}', expected one of {ACTIVATIONS}")
    return Activation.apply(x, kind=kind)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Convolve NCHW `x` with an OutC x InC x K x K kernel"""
    _require_nchw("conv2d", x)
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"conv2d: expected a square OutC x InC x K x K kernel, got {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"conv2d: input has {x.shape[1]} channels but the kernel expects {weight.shape[1]}"
        )
    if bias.shape != (weight.shape[0],):
        raise ShapeError(
            f"conv2d: bias shape {bias.shape} does not match {weight.shape[0]} outputs"
        )
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: invalid stride {stride} or padding {padding}")
    kernel = weight.shape[2]
    out_h = (x.shape[2] + 2 * padding - kernel) // stride + 1
    out_w = (x.shape[3] + 2 * padding - kernel) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"conv2d: non-positive output extent {out_h}x{out_w}")
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack b's channels after a's"""
    _require_nchw("concat_channels", a)
    _require_nchw("concat_channels", b)
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ShapeError(f"concat_channels: batch/spatial mismatch {a.shape} vs {b.shape}")
    return ConcatChannels.apply(a, b)


def _require_divisible(op: str, x: Tensor, factor: int) -> None:
    _require_nchw(op, x)
    if factor < 1 or x.shape[2] % factor or x.shape[3] % factor:
        raise ShapeError(f"{op}: spatial size {x.shape[2:]} not divisible by {factor}")


def pixel_unshuffle(x: Tensor, factor: int = 2) -> Tensor:
    """N x C x H x W -> N x C*r^2 x H/r x W/r"""
    _require_divisible("pixel_unshuffle", x, factor)
    return PixelUnshuffle.apply(x, factor=factor)


def pixel_shuffle(x: Tensor, factor: int = 2) -> Tensor:
    """N x C*r^2 x H x W -> N x C x H*r x W*r"""
    _require_nchw("pixel_shuffle", x)
    if factor < 1 or x.shape[1] % (factor * factor):
        raise ShapeError(f"pixel_shuffle: {x.shape[1]} channels not divisible by {factor ** 2}")
    return PixelShuffle.apply(x, factor=factor)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Resample the spatial axes to out_h x out_w"""
    _require_nchw("bilinear_resize", x)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"bilinear_resize: invalid target size {out_h}x{out_w}")
    return BilinearResize.apply(x, out_h=out_h, out_w=out_w)


def select(x: Tensor, index: int) -> Tensor:
    """x[index] along the leading axis"""
    return Select.apply(x, index=index)


def fft2d(x: Tensor) -> Tuple[Tensor, Tensor]:
    """Real and imaginary parts of the per-channel 2-D DFT"""
    _require_nchw("fft2d", x)
    stacked = Fft2d.apply(x)
    return select(stacked, 0), select(stacked, 1)


def pad_to(x: Tensor, height: int, width: int) -> Tensor:
    """Zero-pad the bottom/right edges up to height x width"""
    _require_nchw("pad_to", x)
    if height < x.shape[2] or width < x.shape[3]:
        raise ShapeError(f"pad_to: target {height}x{width} smaller than {x.shape[2:]}")
    if (height, width) == x.shape[2:]:
        return x
    return PadTo.apply(x, height=height, width=width)
