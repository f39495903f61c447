"""Minimal reverse-mode autodiff over float64 numpy arrays.

Supports exactly the operations the surrogate and router need: affine maps,
elementwise nonlinearities, reductions, column slicing, and a stabilized
log-softmax. Graphs are built eagerly; ``backward`` runs a topological sweep.
``detach`` cuts the graph, which is how truncated backprop-through-time stops
gradients at segment boundaries.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None,
                 name=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in parents
        )
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without grad needs a scalar")
            grad = np.ones_like(self.data)
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen or not t.requires_grad:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        self._accumulate(grad)
        for t in reversed(topo):
            if t._backward is not None:
                t._backward(t.grad)

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        other = _wrap(other)
        out = Tensor(self.data + other.data, parents=(self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        out._backward = bw
        return out

    def __mul__(self, other):
        other = _wrap(other)
        out = Tensor(self.data * other.data, parents=(self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        out._backward = bw
        return out

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (-_wrap(other))

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def matmul(self, other: "Tensor") -> "Tensor":
        other = _wrap(other)
        out = Tensor(self.data @ other.data, parents=(self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ g)

        out._backward = bw
        return out

    __matmul__ = matmul

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)
        out = Tensor(y, parents=(self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * (1.0 - y * y))

        out._backward = bw
        return out

    def sigmoid(self) -> "Tensor":
        y = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(y, parents=(self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * y * (1.0 - y))

        out._backward = bw
        return out

    def relu(self) -> "Tensor":
        y = np.maximum(self.data, 0.0)
        out = Tensor(y, parents=(self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * (self.data > 0.0))

        out._backward = bw
        return out

    def sum(self) -> "Tensor":
        out = Tensor(self.data.sum(), parents=(self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(np.full_like(self.data, float(g)))

        out._backward = bw
        return out

    def mean(self) -> "Tensor":
        scale = 1.0 / self.data.size
        out = Tensor(self.data.mean(), parents=(self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(np.full_like(self.data, float(g) * scale))

        out._backward = bw
        return out

    def cols(self, start: int, stop: int) -> "Tensor":
        """Column slice of a 2D tensor (used to split LSTM gates)."""
        out = Tensor(self.data[..., start:stop], parents=(self,))

        def bw(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                full[..., start:stop] = g
                self._accumulate(full)

        out._backward = bw
        return out

    def log_softmax(self) -> "Tensor":
        """Stabilized log-softmax along the last axis."""
        z = self.data - self.data.max(axis=-1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
        y = z - lse
        out = Tensor(y, parents=(self,))

        def bw(g):
            if self.requires_grad:
                p = np.exp(y)
                self._accumulate(g - p * g.sum(axis=-1, keepdims=True))

        out._backward = bw
        return out


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum-reduce a gradient back to the broadcast operand's shape."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def parameter(data, name="") -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
