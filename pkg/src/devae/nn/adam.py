"""Bias-corrected Adam."""

from __future__ import annotations

import numpy as np

from devae.nn.tensor import Tensor

__all__ = ["AdamState", "adam_step"]


class AdamState:
    """First/second-moment accumulators (zeros) plus a step counter."""

    def __init__(self, params: list[Tensor]):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.step = 0

    def load(self, m: list[np.ndarray], v: list[np.ndarray], step: int) -> None:
        if len(m) != len(self.m) or len(v) != len(self.v):
            raise ValueError("optimizer state does not match parameter list")
        self.m = [np.array(a, dtype=np.float64) for a in m]
        self.v = [np.array(a, dtype=np.float64) for a in v]
        self.step = int(step)


def adam_step(
    params: list[Tensor],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place update of ``params`` from ``grads``; advances the counter."""
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params but {len(grads)} grads")
    state.step += 1
    t = state.step
    # Fold both bias corrections into the step size:
    # update = lr * (m / bc1) / (sqrt(v / bc2) + eps)
    #        = (lr * sqrt(bc2) / bc1) * m / (sqrt(v) + eps * sqrt(bc2))
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    step_size = lr * np.sqrt(bc2) / bc1
    denom_eps = eps * np.sqrt(bc2)
    one_m_b1 = 1.0 - beta1
    one_m_b2 = 1.0 - beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.m[i]
        v = state.v[i]
        m += one_m_b1 * (g - m)
        v += one_m_b2 * (g * g - v)
        denom = np.sqrt(v)
        denom += denom_eps
        np.divide(m, denom, out=denom)
        denom *= step_size
        p.data -= denom
