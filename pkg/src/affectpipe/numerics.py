"""Dense tensor kernels with matching analytic adjoints.

A Tensor4 is a float64 numpy array laid out (batch, channels, height,
width), C-contiguous row-major. Every operation here is a pure function;
each forward op has a companion ``*_backward`` that returns the exact
analytic adjoints of its inputs and parameters, verified against central
finite differences in the test suite.

Convolution is computed by direct summation: one grouped matrix product
per kernel offset. Correctness over speed; sizes here are desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Operand dimensions violate an operation's contract."""


class NumericError(ValueError):
    """Non-finite values where the contract requires finite ones."""


def require_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")


def _as_tensor4(x: np.ndarray, what: str = "input") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"{what} must be 4-d (batch, channels, h, w), got shape {x.shape}")
    return x


@dataclass(frozen=True)
class ConvSpec:
    """Static description of a 2-d convolution.

    Depthwise convolution is expressed as ``groups == in_channels``;
    ``out_channels`` may then be any multiple of ``groups`` (channel
    multiplier). Kernels are square and odd.
    """

    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1
    padding: int = 0
    groups: int = 1
    dilation: int = 1
    bias: bool = True

    def __post_init__(self) -> None:
        for name in ("in_channels", "out_channels", "kernel", "stride", "groups", "dilation"):
            if getattr(self, name) < 1:
                raise ShapeError(f"ConvSpec.{name} must be positive")
        if self.padding < 0:
            raise ShapeError("ConvSpec.padding must be nonnegative")
        if self.kernel % 2 == 0:
            raise ShapeError("only odd kernels are supported")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeError("in_channels and out_channels must be divisible by groups")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, self.kernel, self.kernel)

    def out_hw(self, hw: tuple[int, int]) -> tuple[int, int]:
        h, w = hw
        span = self.dilation * (self.kernel - 1) + 1
        oh = (h + 2 * self.padding - span) // self.stride + 1
        ow = (w + 2 * self.padding - span) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"spatial size {hw} too small for {self}")
        return oh, ow

    def macs(self, hw: tuple[int, int]) -> int:
        """Multiply-accumulates of the kernel product, bias excluded."""
        oh, ow = self.out_hw(hw)
        return oh * ow * self.out_channels * (self.in_channels // self.groups) * self.kernel**2


def _conv_geometry(x: np.ndarray, spec: ConvSpec, weights: np.ndarray):
    x = _as_tensor4(x)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != spec.weight_shape:
        raise ShapeError(f"weight shape {weights.shape} != expected {spec.weight_shape}")
    n, cin, h, w = x.shape
    if cin != spec.in_channels:
        raise ShapeError(f"input has {cin} channels, spec expects {spec.in_channels}")
    oh, ow = spec.out_hw((h, w))
    return x, weights, n, oh, ow


def conv2d(x: np.ndarray, spec: ConvSpec, weights: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Direct-summation grouped 2-d convolution (cross-correlation).

    out[n,o,i,j] = sum_{c,ki,kj} w[o,c,ki,kj] * xpad[n, g(o)+c, i*s+ki*d, j*s+kj*d] + b[o]
    """
    x, weights, n, oh, ow = _conv_geometry(x, spec, weights)
    require_finite(x, "conv2d input")
    g = spec.groups
    s, d, p, k = spec.stride, spec.dilation, spec.padding, spec.kernel
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    xg = xp.reshape(n, g, spec.in_channels // g, *xp.shape[2:])
    wg = weights.reshape(g, spec.out_channels // g, spec.in_channels // g, k, k)
    out = np.zeros((n, g, spec.out_channels // g, oh, ow))
    for ki in range(k):
        for kj in range(k):
            patch = xg[:, :, :, ki * d : ki * d + s * (oh - 1) + 1 : s, kj * d : kj * d + s * (ow - 1) + 1 : s]
            out += np.einsum("ngchw,goc->ngohw", patch, wg[:, :, :, ki, kj], optimize=True)
    y = out.reshape(n, spec.out_channels, oh, ow)
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (spec.out_channels,):
            raise ShapeError(f"bias shape {bias.shape} != ({spec.out_channels},)")
        y += bias[None, :, None, None]
    return y


def conv2d_backward(
    grad_out: np.ndarray, x: np.ndarray, spec: ConvSpec, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Adjoints (grad_x, grad_weights, grad_bias) of :func:`conv2d`."""
    x, weights, n, oh, ow = _conv_geometry(x, spec, weights)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (n, spec.out_channels, oh, ow):
        raise ShapeError(f"adjoint shape {grad_out.shape} != forward output {(n, spec.out_channels, oh, ow)}")
    g = spec.groups
    s, d, p, k = spec.stride, spec.dilation, spec.padding, spec.kernel
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    xg = xp.reshape(n, g, spec.in_channels // g, *xp.shape[2:])
    wg = weights.reshape(g, spec.out_channels // g, spec.in_channels // g, k, k)
    gyg = grad_out.reshape(n, g, spec.out_channels // g, oh, ow)
    gxg = np.zeros_like(xg)
    gwg = np.zeros_like(wg)
    for ki in range(k):
        for kj in range(k):
            rows = slice(ki * d, ki * d + s * (oh - 1) + 1, s)
            cols = slice(kj * d, kj * d + s * (ow - 1) + 1, s)
            patch = xg[:, :, :, rows, cols]
            gwg[:, :, :, ki, kj] = np.einsum("ngohw,ngchw->goc", gyg, patch, optimize=True)
            gxg[:, :, :, rows, cols] += np.einsum("ngohw,goc->ngchw", gyg, wg[:, :, :, ki, kj], optimize=True)
    gx = gxg.reshape(xp.shape)
    if p:
        gx = gx[:, :, p:-p, p:-p]
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    return gx, gwg.reshape(weights.shape), grad_bias


def linear(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """y = W x + b, rows of ``x`` treated as independent samples."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or weights.ndim != 2 or xb.shape[1] != weights.shape[1]:
        raise ShapeError(f"linear dims do not conform: x {x.shape}, W {weights.shape}")
    y = xb @ weights.T
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (weights.shape[0],):
            raise ShapeError(f"bias shape {bias.shape} != ({weights.shape[0]},)")
        y = y + bias
    return y[0] if single else y


def linear_backward(
    grad_out: np.ndarray, x: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    gy = grad_out[None, :] if single else grad_out
    if gy.shape != (xb.shape[0], weights.shape[0]):
        raise ShapeError(f"adjoint shape {grad_out.shape} does not match output")
    gx = gy @ weights
    gw = gy.T @ xb
    gb = gy.sum(axis=0)
    return (gx[0] if single else gx), gw, gb


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Per-channel spatial mean, (n, c, h, w) -> (n, c)."""
    x = _as_tensor4(x)
    if x.shape[2] < 1 or x.shape[3] < 1:
        raise ShapeError("global_avg_pool requires nonempty spatial extent")
    return x.mean(axis=(2, 3))


def global_avg_pool_backward(grad_out: np.ndarray, x_shape: tuple[int, ...]) -> np.ndarray:
    n, c, h, w = x_shape
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (n, c):
        raise ShapeError(f"adjoint shape {grad_out.shape} != ({n}, {c})")
    return np.broadcast_to(grad_out[:, :, None, None] / (h * w), x_shape).copy()


def channel_affine(x: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Learnable per-channel y = scale[c] * x + shift[c] (normalization stand-in)."""
    x = _as_tensor4(x)
    if scale.shape != (x.shape[1],) or shift.shape != (x.shape[1],):
        raise ShapeError("scale/shift must be per-channel vectors")
    return x * scale[None, :, None, None] + shift[None, :, None, None]


def channel_affine_backward(
    grad_out: np.ndarray, x: np.ndarray, scale: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != x.shape:
        raise ShapeError("adjoint shape must match forward output")
    gx = grad_out * scale[None, :, None, None]
    gscale = (grad_out * x).sum(axis=(0, 2, 3))
    gshift = grad_out.sum(axis=(0, 2, 3))
    return gx, gscale, gshift


# -- elementwise activations ------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(x) > 0, grad_out, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(grad_out: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Adjoint in terms of the forward output y = sigmoid(x)."""
    return grad_out * y * (1.0 - y)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def tanh_backward(grad_out: np.ndarray, y: np.ndarray) -> np.ndarray:
    return grad_out * (1.0 - y * y)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax; output rows are probability vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[axis] < 1:
        raise ShapeError("softmax input must be nonempty along its axis")
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(grad_out: np.ndarray, y: np.ndarray, axis: int = -1) -> np.ndarray:
    inner = (grad_out * y).sum(axis=axis, keepdims=True)
    return y * (grad_out - inner)


ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "softmax": softmax, "tanh": tanh}


def activation(kind: str, x: np.ndarray) -> np.ndarray:
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def central_difference(f, x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Numerical gradient of scalar-valued ``f`` at ``x`` by central differences."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad
