"""Differentiable primitives.

Each op computes its value eagerly with numpy and registers forward/backward
closures on the active tape (see :mod:`devae.nn.tensor`). The op set is
deliberately small: exactly what encoder/decoder stacks, the latent-space
math, and the two reconstruction losses need.
"""

from __future__ import annotations

import numpy as np

from devae.errors import ConfigurationError, DataError
from devae.nn.tensor import Tensor, record

__all__ = [
    "as_tensor",
    "add",
    "sub",
    "mul",
    "neg",
    "exp",
    "reduce_sum",
    "reduce_mean",
    "reshape",
    "concat",
    "slice_cols",
    "matmul",
    "transpose",
    "affine",
    "relu",
    "bce_with_logits",
    "squared_error",
    "bce_with_logits_value",
    "squared_error_value",
    "sigmoid_value",
]


def as_tensor(value) -> Tensor:
    """Wrap plain numbers/arrays as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fwd(ad, bd):
        return ad + bd

    def bwd(g, needs):
        ga = _unbroadcast(g, a.shape) if needs[0] else None
        gb = _unbroadcast(g, b.shape) if needs[1] else None
        return ga, gb

    return record("add", (a, b), fwd(a.data, b.data), fwd, bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fwd(ad, bd):
        return ad - bd

    def bwd(g, needs):
        ga = _unbroadcast(g, a.shape) if needs[0] else None
        gb = _unbroadcast(-g, b.shape) if needs[1] else None
        return ga, gb

    return record("sub", (a, b), fwd(a.data, b.data), fwd, bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fwd(ad, bd):
        return ad * bd

    def bwd(g, needs):
        ga = _unbroadcast(g * b.data, a.shape) if needs[0] else None
        gb = _unbroadcast(g * a.data, b.shape) if needs[1] else None
        return ga, gb

    return record("mul", (a, b), fwd(a.data, b.data), fwd, bwd)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def fwd(ad):
        return -ad

    def bwd(g, needs):
        return ((-g) if needs[0] else None,)

    return record("neg", (a,), fwd(a.data), fwd, bwd)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def fwd(ad):
        return np.exp(ad)

    def bwd(g, needs):
        return ((g * out_data) if needs[0] else None,)

    return record("exp", (a,), out_data, fwd, bwd)


def reduce_sum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    in_shape = a.shape

    def fwd(ad):
        return np.sum(ad, axis=axis)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        if axis is None:
            return (np.broadcast_to(g, in_shape).copy(),)
        gexp = np.expand_dims(g, axis)
        return (np.broadcast_to(gexp, in_shape).copy(),)

    return record("sum", (a,), fwd(a.data), fwd, bwd)


def reduce_mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    in_shape = a.shape
    count = a.size if axis is None else in_shape[axis]

    def fwd(ad):
        return np.mean(ad, axis=axis)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        scaled = g / count
        if axis is None:
            return (np.broadcast_to(scaled, in_shape).copy(),)
        gexp = np.expand_dims(scaled, axis)
        return (np.broadcast_to(gexp, in_shape).copy(),)

    return record("mean", (a,), fwd(a.data), fwd, bwd)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    in_shape = a.shape
    shape = tuple(shape)

    def fwd(ad):
        return np.ascontiguousarray(ad).reshape(shape)

    def bwd(g, needs):
        return (g.reshape(in_shape) if needs[0] else None,)

    return record("reshape", (a,), fwd(a.data), fwd, bwd)


def concat(parts, axis: int = 1) -> Tensor:
    parts = tuple(as_tensor(p) for p in parts)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def fwd(*datas):
        return np.concatenate(datas, axis=axis)

    def bwd(g, needs):
        out = []
        for i, p in enumerate(parts):
            if not needs[i]:
                out.append(None)
                continue
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            out.append(np.ascontiguousarray(g[tuple(sl)]))
        return out

    return record("concat", parts, fwd(*[p.data for p in parts]), fwd, bwd)


def slice_cols(a, start: int, stop: int) -> Tensor:
    """Columns [start, stop) of a 2-D tensor."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ValueError(f"slice_cols expects a 2-D tensor, got {a.shape}")
    in_shape = a.shape

    def fwd(ad):
        return np.ascontiguousarray(ad[:, start:stop])

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        ga = np.zeros(in_shape)
        ga[:, start:stop] = g
        return (ga,)

    return record("slice_cols", (a,), fwd(a.data), fwd, bwd)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def fwd(ad, bd):
        return ad @ bd

    def bwd(g, needs):
        ga = g @ b.data.T if needs[0] else None
        gb = a.data.T @ g if needs[1] else None
        return ga, gb

    return record("matmul", (a, b), fwd(a.data, b.data), fwd, bwd)


def transpose(a) -> Tensor:
    a = as_tensor(a)

    def fwd(ad):
        return np.ascontiguousarray(ad.T)

    def bwd(g, needs):
        return (np.ascontiguousarray(g.T) if needs[0] else None,)

    return record("transpose", (a,), fwd(a.data), fwd, bwd)


def affine(x, weights, bias) -> Tensor:
    """Fully connected layer: y[b, o] = sum_i x[b, i] W[i, o] + bias[o]."""
    x, weights, bias = as_tensor(x), as_tensor(weights), as_tensor(bias)
    if x.ndim != 2 or weights.ndim != 2 or bias.ndim != 1:
        raise ConfigurationError(
            f"affine expects (batch,in), (in,out), (out,), got {x.shape}, {weights.shape}, {bias.shape}"
        )
    if x.shape[1] != weights.shape[0] or weights.shape[1] != bias.shape[0]:
        raise ConfigurationError(
            f"affine shape mismatch: x {x.shape}, weights {weights.shape}, bias {bias.shape}"
        )

    def fwd(xd, wd, bd):
        return xd @ wd + bd

    def bwd(g, needs):
        gx = g @ weights.data.T if needs[0] else None
        gw = x.data.T @ g if needs[1] else None
        gb = g.sum(axis=0) if needs[2] else None
        return gx, gw, gb

    return record("affine", (x, weights, bias), fwd(x.data, weights.data, bias.data), fwd, bwd)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def fwd(ad):
        return np.maximum(ad, 0.0)

    def bwd(g, needs):
        return ((g * mask) if needs[0] else None,)

    return record("relu", (a,), fwd(a.data), fwd, bwd)


def sigmoid_value(logits: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function on raw arrays."""
    # exp(-|l|) never overflows; assemble both branches from it.
    e = np.exp(-np.abs(logits))
    denom = 1.0 + e
    return np.where(logits >= 0, 1.0 / denom, e / denom)


def bce_with_logits_value(logits: np.ndarray, targets: np.ndarray) -> float:
    """Stable binary cross entropy, summed over elements per sample, batch-averaged.

    logaddexp(0, l) computes max(l, 0) + log1p(exp(-|l|)) without overflow.
    """
    elem = np.logaddexp(0.0, logits) - logits * targets
    return float(elem.sum() / logits.shape[0])


def bce_with_logits(logits, targets) -> Tensor:
    """Binary cross entropy between logits and targets in [0, 1].

    Computed in the log1p form (never sigmoid-then-log), summed over all
    non-batch elements and averaged over the leading batch axis.
    """
    logits = as_tensor(logits)
    targets = as_tensor(targets)
    if logits.shape != targets.shape:
        raise ConfigurationError(f"bce shape mismatch: {logits.shape} vs {targets.shape}")
    tdata = targets.data
    if tdata.size and (tdata.min() < 0.0 or tdata.max() > 1.0):
        raise DataError("bce_with_logits targets must lie in [0, 1]")
    batch = logits.shape[0]

    def fwd(ld, td):
        return np.array(bce_with_logits_value(ld, td))

    def bwd(g, needs):
        gl = g * (sigmoid_value(logits.data) - tdata) / batch if needs[0] else None
        return gl, None

    return record("bce_with_logits", (logits, targets), fwd(logits.data, tdata), fwd, bwd)


def squared_error_value(recon: np.ndarray, target: np.ndarray) -> float:
    diff = recon - target
    return float((diff * diff).sum() / recon.shape[0])


def squared_error(recon, target) -> Tensor:
    """Sum of squared differences over elements per sample, batch-averaged."""
    recon = as_tensor(recon)
    target = as_tensor(target)
    if recon.shape != target.shape:
        raise ConfigurationError(f"squared_error shape mismatch: {recon.shape} vs {target.shape}")
    batch = recon.shape[0]

    def fwd(rd, td):
        return np.array(squared_error_value(rd, td))

    def bwd(g, needs):
        gr = g * 2.0 * (recon.data - target.data) / batch if needs[0] else None
        return gr, None

    return record("squared_error", (recon, target), fwd(recon.data, target.data), fwd, bwd)
