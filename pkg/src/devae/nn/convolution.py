"""Strided 2-D convolution and its exact adjoint (transposed convolution).

Defaults (kernel 4, stride 2, pad 1) halve / double spatial extents, which is
the only geometry the encoder/decoder stacks use. Shapes:

    conv2d:   x[B, C, H, W],  kernel[OC, C, KH, KW] -> y[B, OC, H', W']
    deconv2d: x[B, OC, H, W], kernel[OC, C, KH, KW] -> y[B, C, H'', W'']

deconv2d is the adjoint of conv2d with identical hyperparameters:
<conv(x), y> == <x, deconv(y)> holds to rounding for matched kernels.
"""

from __future__ import annotations

import numpy as np

from devae.errors import ConfigurationError
from devae.nn.tensor import Tensor, record
from devae.nn.ops import as_tensor

__all__ = ["conv2d", "deconv2d"]


def _out_extent(extent: int, kernel: int, stride: int, pad: int) -> int:
    span = extent + 2 * pad - kernel
    if span < 0 or span % stride != 0:
        raise ConfigurationError(
            f"spatial extent {extent} incompatible with kernel {kernel}, stride {stride}, pad {pad}"
        )
    return span // stride + 1


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _patches(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Gather [B, C, KH, KW, OH, OW] sliding windows from a padded input."""
    b, c = xp.shape[:2]
    cols = np.empty((b, c, kh, kw, oh, ow), dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            cols[:, :, u, v] = xp[:, :, u : u + stride * oh : stride, v : v + stride * ow : stride]
    return cols


def _conv_forward(x: np.ndarray, kernel: np.ndarray, stride: int, pad: int) -> np.ndarray:
    oc, c, kh, kw = kernel.shape
    oh = _out_extent(x.shape[2], kh, stride, pad)
    ow = _out_extent(x.shape[3], kw, stride, pad)
    cols = _patches(_pad(x, pad), kh, kw, stride, oh, ow)
    y = np.tensordot(cols, kernel, axes=([1, 2, 3], [1, 2, 3]))  # [B, OH, OW, OC]
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def _conv_input_grad(
    g: np.ndarray, kernel: np.ndarray, stride: int, pad: int, out_hw: tuple[int, int]
) -> np.ndarray:
    """Scatter an output-side array back through the convolution geometry.

    This is both the gradient of conv2d w.r.t. its input and the forward map
    of deconv2d.
    """
    oc, c, kh, kw = kernel.shape
    b, _, oh, ow = g.shape
    h, w = out_hw
    acc = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            # contribution[b, c, i, j] = sum_oc g[b, oc, i, j] * kernel[oc, c, u, v]
            contrib = np.tensordot(g, kernel[:, :, u, v], axes=([1], [0]))  # [B, OH, OW, C]
            acc[:, :, u : u + stride * oh : stride, v : v + stride * ow : stride] += (
                contrib.transpose(0, 3, 1, 2)
            )
    if pad == 0:
        return acc
    return np.ascontiguousarray(acc[:, :, pad : pad + h, pad : pad + w])


def _conv_kernel_grad(
    x: np.ndarray, g: np.ndarray, stride: int, pad: int, kshape: tuple[int, ...]
) -> np.ndarray:
    oc, c, kh, kw = kshape
    b, _, oh, ow = g.shape
    cols = _patches(_pad(x, pad), kh, kw, stride, oh, ow)
    # gk[oc, c, u, v] = sum_{b,i,j} g[b, oc, i, j] * cols[b, c, u, v, i, j]
    return np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5]))


def conv2d(x, kernel, stride: int = 2, pad: int = 1) -> Tensor:
    """Cross-correlation with zero padding; halves spatial extents at defaults."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ConfigurationError(f"conv2d expects 4-D tensors, got {x.shape}, {kernel.shape}")
    if x.shape[1] != kernel.shape[1]:
        raise ConfigurationError(
            f"conv2d channel mismatch: input {x.shape[1]} vs kernel {kernel.shape[1]}"
        )
    out_hw = (x.shape[2], x.shape[3])
    kshape = kernel.shape

    def fwd(xd, kd):
        return _conv_forward(xd, kd, stride, pad)

    def bwd(g, needs):
        gx = _conv_input_grad(g, kernel.data, stride, pad, out_hw) if needs[0] else None
        gk = _conv_kernel_grad(x.data, g, stride, pad, kshape) if needs[1] else None
        return gx, gk

    return record("conv2d", (x, kernel), fwd(x.data, kernel.data), fwd, bwd)


def deconv2d(x, kernel, stride: int = 2, pad: int = 1) -> Tensor:
    """Transposed convolution; doubles spatial extents at defaults."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ConfigurationError(f"deconv2d expects 4-D tensors, got {x.shape}, {kernel.shape}")
    if x.shape[1] != kernel.shape[0]:
        raise ConfigurationError(
            f"deconv2d channel mismatch: input {x.shape[1]} vs kernel {kernel.shape[0]}"
        )
    oc, c, kh, kw = kernel.shape
    b, _, hin, win = x.shape
    hout = stride * (hin - 1) - 2 * pad + kh
    wout = stride * (win - 1) - 2 * pad + kw
    if hout <= 0 or wout <= 0:
        raise ConfigurationError(f"deconv2d output extent non-positive for input {x.shape}")

    def fwd(xd, kd):
        return _conv_input_grad(xd, kd, stride, pad, (hout, wout))

    def bwd(g, needs):
        gx = _conv_forward(g, kernel.data, stride, pad) if needs[0] else None
        gk = _conv_kernel_grad(g, x.data, stride, pad, kernel.shape) if needs[1] else None
        return gx, gk

    return record("deconv2d", (x, kernel), fwd(x.data, kernel.data), fwd, bwd)
