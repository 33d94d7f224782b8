"""Differentiable primitives, the computation tape, and the Adam optimizer."""

from devae.nn.tensor import Tensor, Tape, Node, active_tape
from devae.nn.adam import AdamState, adam_step
from devae.nn import ops
from devae.nn.convolution import conv2d, deconv2d
from devae.nn.gradcheck import central_difference, check_gradients, max_relative_error

__all__ = [
    "Tensor",
    "Tape",
    "Node",
    "active_tape",
    "AdamState",
    "adam_step",
    "ops",
    "conv2d",
    "deconv2d",
    "central_difference",
    "check_gradients",
    "max_relative_error",
]
