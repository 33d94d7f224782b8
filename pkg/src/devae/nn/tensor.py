"""Tensor values and the reverse-mode computation tape.

A Tensor wraps a float64 numpy array (row-major). Primitive operations in
:mod:`devae.nn.ops` compute eagerly; while a :class:`Tape` is active they also
append a :class:`Node` recording the application, in execution order.
Execution order is a topological order of the data-flow graph, so the backward
pass simply walks the recorded nodes in reverse.

Gradients exist only for operations performed under ``with Tape() as tape:``;
outside a tape the same ops run as plain numpy math, which is what evaluation
and metric code uses.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = ["Tensor", "Node", "Tape", "active_tape", "record"]

_ACTIVE_TAPE: "Tape | None" = None


def active_tape() -> "Tape | None":
    return _ACTIVE_TAPE


class Tensor:
    """A float64 n-dimensional value, optionally marked trainable."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64, order="C")
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Arithmetic sugar; implementations live in ops to keep the op set explicit.
    def __add__(self, other):
        from devae.nn import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from devae.nn import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        from devae.nn import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from devae.nn import ops

        return ops.sub(other, self)

    def __neg__(self):
        from devae.nn import ops

        return ops.neg(self)

    def exp(self):
        from devae.nn import ops

        return ops.exp(self)

    def sum(self, axis=None):
        from devae.nn import ops

        return ops.reduce_sum(self, axis=axis)

    def mean(self, axis=None):
        from devae.nn import ops

        return ops.reduce_mean(self, axis=axis)

    def reshape(self, shape):
        from devae.nn import ops

        return ops.reshape(self, shape)


class Node:
    """One recorded primitive application.

    ``forward_fn`` recomputes the output from input arrays (used by replay);
    ``backward_fn(grad_out, needs)`` returns one gradient per input, with None
    where ``needs`` is False.
    """

    __slots__ = ("op", "inputs", "output", "forward_fn", "backward_fn")

    def __init__(
        self,
        op: str,
        inputs: tuple[Tensor, ...],
        output: Tensor,
        forward_fn: Callable[..., np.ndarray],
        backward_fn: Callable[[np.ndarray, tuple[bool, ...]], Sequence[np.ndarray | None]],
    ):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.forward_fn = forward_fn
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitive applications for one forward computation."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
        self._prev = None

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Reverse-accumulate gradients of a scalar ``loss``.

        Visits nodes in exact reverse recording order (reverse topological
        order of the forward graph). Populates ``.grad`` on every
        requires_grad leaf reachable from the loss and returns the full
        id(tensor) -> gradient map for inspection.
        """
        if loss.shape != ():
            raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.array(1.0)}
        leaves: dict[int, Tensor] = {id(loss): loss}
        produced = {id(node.output) for node in self.nodes}
        for node in reversed(self.nodes):
            gout = grads.get(id(node.output))
            if gout is None:
                continue
            needs = tuple(t.requires_grad for t in node.inputs)
            gins = node.backward_fn(gout, needs)
            for tensor, gin in zip(node.inputs, gins):
                if gin is None:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + gin
                else:
                    grads[key] = gin
                    leaves[key] = tensor
        for key, tensor in leaves.items():
            if tensor.requires_grad and key not in produced:
                tensor.grad = np.asarray(grads[key])
        return grads

    def replay(self) -> dict[int, np.ndarray]:
        """Re-execute every recorded primitive in order.

        Returns id(output tensor) -> recomputed array; with unchanged leaf
        data the recomputation reproduces the recorded outputs bitwise.
        """
        values: dict[int, np.ndarray] = {}
        for node in self.nodes:
            args = [values.get(id(t), t.data) for t in node.inputs]
            values[id(node.output)] = node.forward_fn(*args)
        return values


def record(
    op: str,
    inputs: tuple[Tensor, ...],
    out_data: np.ndarray,
    forward_fn: Callable[..., np.ndarray],
    backward_fn: Callable[[np.ndarray, tuple[bool, ...]], Sequence[np.ndarray | None]],
) -> Tensor:
    """Create the output tensor of a primitive, recording it if a tape is active."""
    out = Tensor(out_data, requires_grad=any(t.requires_grad for t in inputs))
    tape = _ACTIVE_TAPE
    if tape is not None:
        tape.nodes.append(Node(op, inputs, out, forward_fn, backward_fn))
    return out
