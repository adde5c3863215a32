"""Minimal tape-based reverse-mode differentiation over numpy arrays.

Every differentiable operation appends a backward closure to a
:class:`GradientTape`.  ``tape.backward(loss)`` seeds the loss gradient
with one and replays the closures in exact reverse order of recording.
Gradients are accumulated additively, so a parameter referenced by two
branches (or by every step of an unrolled recurrence) receives the sum
of all contributions.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class ContractError(ValueError):
    """Raised when an operation receives inputs that violate its contract."""


class Node:
    """A value in the computation graph with an (optional) gradient slot."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g):
        g = np.asarray(g, dtype=np.float64)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.value.shape})"


class Param(Node):
    """A trainable array.  Its gradient persists until :meth:`zero_grad`."""

    __slots__ = ("name", "regularize")

    def __init__(self, value, name="", regularize=True):
        super().__init__(value)
        self.name = name
        # bias vectors opt out of the L1 penalty
        self.regularize = regularize
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


class GradientTape:
    """Ordered record of backward closures for one forward pass."""

    def __init__(self):
        self._ops: list[tuple[str, Callable[[], None]]] = []

    def __len__(self):
        return len(self._ops)

    @property
    def op_names(self):
        return [name for name, _ in self._ops]

    def record(self, name: str, backward: Callable[[], None]) -> None:
        self._ops.append((name, backward))

    def backward(self, loss: Node, trace: list | None = None) -> None:
        if loss.value.size != 1:
            raise ContractError("backward() needs a scalar loss")
        loss.accumulate(np.ones_like(loss.value))
        for name, fn in reversed(self._ops):
            if trace is not None:
                trace.append(name)
            fn()
        self._ops.clear()


def _record(tape, name, backward):
    if tape is not None:
        tape.record(name, backward)


def add(a: Node, b: Node, tape=None) -> Node:
    out = Node(a.value + b.value)

    def backward():
        if out.grad is not None:
            a.accumulate(out.grad)
            b.accumulate(out.grad)

    _record(tape, "add", backward)
    return out


def scale(a: Node, factor: float, tape=None) -> Node:
    out = Node(a.value * factor)

    def backward():
        if out.grad is not None:
            a.accumulate(out.grad * factor)

    _record(tape, "scale", backward)
    return out


def reshape(a: Node, shape, tape=None) -> Node:
    out = Node(a.value.reshape(shape))

    def backward():
        if out.grad is not None:
            a.accumulate(out.grad.reshape(a.value.shape))

    _record(tape, "reshape", backward)
    return out


def concat(nodes: list[Node], axis: int = -1, tape=None) -> Node:
    out = Node(np.concatenate([n.value for n in nodes], axis=axis))
    bounds = np.cumsum([0] + [n.value.shape[axis] for n in nodes])

    def backward():
        if out.grad is None:
            return
        for n, lo, hi in zip(nodes, bounds[:-1], bounds[1:]):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = slice(lo, hi)
            n.accumulate(out.grad[tuple(idx)])

    _record(tape, "concat", backward)
    return out


def gather_rows(source: Node, index: np.ndarray, tape=None) -> Node:
    """``out[...] = source[index[...]]`` with ``index == -1`` yielding zeros."""
    index = np.asarray(index, dtype=np.int64)
    padded = np.vstack([source.value, np.zeros((1, source.value.shape[1]))])
    out = Node(padded[index])
    flat = index.reshape(-1)
    keep = flat >= 0
    rows = flat[keep]
    unique = len(np.unique(rows)) == len(rows)

    def backward():
        if out.grad is None:
            return
        g = np.zeros_like(source.value)
        grads = out.grad.reshape(-1, source.value.shape[1])[keep]
        if unique:
            g[rows] = grads
        else:
            np.add.at(g, rows, grads)
        source.accumulate(g)

    _record(tape, "gather_rows", backward)
    return out


def mean_squared_error(pred: Node, target, tape=None) -> Node:
    target = np.asarray(target, dtype=np.float64).reshape(pred.value.shape)
    diff = pred.value - target
    out = Node(np.mean(diff**2))

    def backward():
        if out.grad is not None:
            pred.accumulate(out.grad * 2.0 * diff / diff.size)

    _record(tape, "mse", backward)
    return out

