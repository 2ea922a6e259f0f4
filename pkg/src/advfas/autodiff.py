"""Minimal reverse-mode automatic differentiation over numpy arrays.

Deliberately tiny: dense tensors, a dozen ops, scalar-rooted backward over a
topologically sorted tape. Everything the two-head model, the losses, and the
gradient-ascent attacks need, and nothing else. Gradients accumulate in
float64 regardless of the forward dtype.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .errors import ShapeError

__all__ = ["Tensor", "astensor", "log", "clip", "sigmoid", "relu", "tanh"]

Array = np.ndarray


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    # Reduce `grad` back to `shape` by summing the axes numpy broadcast expanded.
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus the tape bookkeeping needed for backward()."""

    __slots__ = ("data", "grad", "requires_grad", "_parents")

    # make ndarray <op> Tensor defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data: Array = arr
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        # list of (parent, vjp) pairs; vjp maps the upstream grad to the
        # parent-shaped contribution
        self._parents: list[tuple[Tensor, Callable[[Array], Array]]] = []

    # ---- construction helpers -------------------------------------------

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
        if self.data.size != 1:
            raise ShapeError("item() requires a single-element tensor")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A constant view of this value; backward never crosses it."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # ---- graph plumbing ---------------------------------------------------

    @staticmethod
    def _make(data: Array, parents: Iterable[tuple["Tensor", Callable[[Array], Array]]]) -> "Tensor":
        links = [(p, fn) for p, fn in parents if p.requires_grad or p._parents]
        out = Tensor(data, requires_grad=bool(links))
        out._parents = links
        return out

    def _accumulate(self, grad: Array) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + grad

    def backward(self) -> None:
        """Reverse sweep from a scalar root, accumulating into .grad fields."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar root, got shape %r" % (self.data.shape,))
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data, dtype=np.float64))
        for node in reversed(topo):
            if node.grad is None:
                continue
            g = node.grad
            for parent, vjp in node._parents:
                parent._accumulate(vjp(g))

    def graph_leaf_ids(self) -> set[int]:
        """ids of every requires_grad leaf reachable from this node."""
        leaves: set[int] = set()
        seen: set[int] = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            if not node._parents:
                if node.requires_grad:
                    leaves.add(id(node))
                continue
            stack.extend(parent for parent, _ in node._parents)
        return leaves

    # ---- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = astensor(other)
        out_data = self.data + other.data
        a_shape, b_shape = self.data.shape, other.data.shape
        return Tensor._make(
            out_data,
            [
                (self, lambda g: _unbroadcast(g, a_shape)),
                (other, lambda g: _unbroadcast(g, b_shape)),
            ],
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, [(self, lambda g: -g)])

    def __sub__(self, other):
        return self + (-astensor(other))

    def __rsub__(self, other):
        return astensor(other) + (-self)

    def __mul__(self, other):
        other = astensor(other)
        a, b = self.data, other.data
        return Tensor._make(
            a * b,
            [
                (self, lambda g: _unbroadcast(g * b, a.shape)),
                (other, lambda g: _unbroadcast(g * a, b.shape)),
            ],
        )

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = astensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError("matmul supports 2-D operands only")
        a, b = self.data, other.data
        return Tensor._make(
            a @ b,
            [
                (self, lambda g: g @ b.T),
                (other, lambda g: a.T @ g),
            ],
        )

    # ---- elementwise nonlinearities ---------------------------------------

    def log(self):
        x = self.data
        return Tensor._make(np.log(x), [(self, lambda g: g / x)])

    def sigmoid(self):
        x = self.data
        # numerically stable in both tails
        out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return Tensor._make(out, [(self, lambda g: g * out * (1.0 - out))])

    def relu(self):
        x = self.data
        mask = x > 0
        return Tensor._make(np.where(mask, x, 0.0), [(self, lambda g: g * mask)])

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor._make(out, [(self, lambda g: g * (1.0 - out * out))])

    def clip(self, lo: float, hi: float):
        """Clamp values to [lo, hi]; gradient passes where lo <= x <= hi."""
        x = self.data
        inside = (x >= lo) & (x <= hi)
        return Tensor._make(np.clip(x, lo, hi), [(self, lambda g: g * inside)])

    # ---- reductions / reshapes -----------------------------------------------

    def sum(self):
        shape = self.data.shape
        return Tensor._make(
            np.asarray(self.data.sum()),
            [(self, lambda g: np.broadcast_to(g, shape))],
        )

    def mean(self):
        n = self.data.size
        shape = self.data.shape
        return Tensor._make(
            np.asarray(self.data.mean()),
            [(self, lambda g: np.broadcast_to(g / n, shape))],
        )

    def reshape(self, *shape: int):
        old = self.data.shape
        return Tensor._make(self.data.reshape(*shape), [(self, lambda g: g.reshape(old))])


def astensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# Dispatch helpers so loss formulas read the same over floats, arrays, tensors.

def log(x):
    return x.log() if isinstance(x, Tensor) else np.log(x)


def clip(x, lo: float, hi: float):
    return x.clip(lo, hi) if isinstance(x, Tensor) else np.clip(x, lo, hi)


def sigmoid(x):
    if isinstance(x, Tensor):
        return x.sigmoid()
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def relu(x):
    return x.relu() if isinstance(x, Tensor) else np.maximum(x, 0.0)


def tanh(x):
    return x.tanh() if isinstance(x, Tensor) else np.tanh(x)
