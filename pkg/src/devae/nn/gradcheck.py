"""Finite-difference gradient verification.

The oracle never touches the tape: it re-evaluates the loss with single
coordinates perturbed and compares central differences against the analytic
gradients from a backward pass.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from devae.nn.tensor import Tape, Tensor

__all__ = ["central_difference", "max_relative_error", "check_gradients"]


def central_difference(
    loss_fn: Callable[[], float], param: Tensor, index: tuple[int, ...], step: float = 1e-5
) -> float:
    """d loss / d param[index] by central differences; restores the parameter."""
    original = param.data[index]
    param.data[index] = original + step
    f_plus = loss_fn()
    param.data[index] = original - step
    f_minus = loss_fn()
    param.data[index] = original
    return (f_plus - f_minus) / (2.0 * step)


def max_relative_error(analytic: float, numeric: float, floor: float = 1e-3) -> float:
    """|a - n| scaled by max(|a|, |n|, floor)."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(
    build_loss: Callable[[], Tensor],
    params: Sequence[Tensor],
    coords: Sequence[tuple[int, tuple[int, ...]]],
    step: float = 1e-5,
    floor: float = 1e-3,
) -> float:
    """Compare analytic and numeric gradients at given (param index, coord) pairs.

    ``build_loss`` must be deterministic (inject any noise it needs). Returns
    the worst relative error over the requested coordinates. ``floor`` sets
    the magnitude below which the comparison becomes absolute; raise it for
    large-magnitude losses whose central-difference noise floor
    (~eps * |loss| / step) would otherwise dominate tiny gradients.
    """
    with Tape() as tape:
        loss = build_loss()
    tape.backward(loss)
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]

    def value() -> float:
        return build_loss().item()

    worst = 0.0
    for pi, idx in coords:
        num = central_difference(value, params[pi], idx, step=step)
        err = max_relative_error(float(analytic[pi][idx]), num, floor=floor)
        worst = max(worst, err)
    return worst
