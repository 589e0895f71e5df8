"""Minimal reverse-mode automatic differentiation over numpy arrays.

Builds a dynamic tape of elementwise / matrix operations and computes
exact gradients of a scalar output with respect to any tensor marked
as requiring gradients.  Only the operations needed by the model and
its losses are implemented.  All data is float64.
"""

import numpy as np

from .errors import NumericError, ShapeError


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the differentiation graph wrapping an ndarray."""

    __slots__ = ("data", "grad", "_parents", "_vjps", "requires_grad")

    def __init__(self, data, parents=(), vjps=(), requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._vjps = vjps
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    # -- graph construction helpers ------------------------------------

    @staticmethod
    def _lift(other):
        return other if isinstance(other, Tensor) else Tensor(other)

    def _binary(self, other, out, vjp_self, vjp_other):
        other = Tensor._lift(other)
        return Tensor(out, (self, other), (vjp_self, vjp_other))

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other):
        other = Tensor._lift(other)
        return self._binary(
            other,
            self.data + other.data,
            lambda g: _unbroadcast(g, self.data.shape),
            lambda g: _unbroadcast(g, other.data.shape),
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._lift(other)
        return self._binary(
            other,
            self.data - other.data,
            lambda g: _unbroadcast(g, self.data.shape),
            lambda g: _unbroadcast(-g, other.data.shape),
        )

    def __rsub__(self, other):
        return Tensor._lift(other).__sub__(self)

    def __mul__(self, other):
        other = Tensor._lift(other)
        return self._binary(
            other,
            self.data * other.data,
            lambda g: _unbroadcast(g * other.data, self.data.shape),
            lambda g: _unbroadcast(g * self.data, other.data.shape),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        return self._binary(
            other,
            self.data / other.data,
            lambda g: _unbroadcast(g / other.data, self.data.shape),
            lambda g: _unbroadcast(-g * self.data / other.data**2, other.data.shape),
        )

    def __neg__(self):
        return Tensor(-self.data, (self,), (lambda g: -g,))

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out = self.data**exponent
        return Tensor(
            out, (self,), (lambda g: g * exponent * self.data ** (exponent - 1),)
        )

    def __matmul__(self, other):
        other = Tensor._lift(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError("matmul expects 2-d operands")
        return self._binary(
            other,
            self.data @ other.data,
            lambda g: g @ other.data.T,
            lambda g: self.data.T @ g,
        )

    # -- shape manipulation ----------------------------------------------

    @property
    def T(self):
        if self.data.ndim != 2:
            raise ShapeError("transpose expects a 2-d tensor")
        return Tensor(self.data.T, (self,), (lambda g: g.T,))

    def reshape(self, *shape):
        old = self.data.shape
        return Tensor(
            self.data.reshape(*shape), (self,), (lambda g: g.reshape(old),)
        )

    def __getitem__(self, idx):
        out = self.data[idx]

        def vjp(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            return full

        return Tensor(out, (self,), (vjp,))

    # -- elementwise functions ---------------------------------------------

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor(out, (self,), (lambda g: g * (1.0 - out**2),))

    def exp(self):
        out = np.exp(self.data)
        return Tensor(out, (self,), (lambda g: g * out,))

    def log(self):
        return Tensor(np.log(self.data), (self,), (lambda g: g / self.data,))

    def clip(self, lo, hi):
        out = np.clip(self.data, lo, hi)
        inside = (self.data > lo) & (self.data < hi)
        return Tensor(out, (self,), (lambda g: g * inside,))

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def vjp(g):
            if axis is None:
                return np.broadcast_to(g, shape).copy()
            g2 = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(g2, shape).copy()

        return Tensor(out, (self,), (vjp,))

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- backward pass ------------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ShapeError("backward requires a scalar output")
        if not np.isfinite(self.data):
            raise NumericError(f"non-finite value in backward: {self.data!r}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node.grad is None:
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                if not parent.requires_grad:
                    continue
                g = vjp(node.grad)
                parent.grad = g if parent.grad is None else parent.grad + g


def constant(x):
    """Wrap an array as a gradient-free tensor."""
    return Tensor(x)


def softmax(t, axis=-1):
    """Softmax along `axis`, shift-stabilized with a detached max."""
    shift = constant(t.data.max(axis=axis, keepdims=True))
    e = (t - shift).exp()
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(t, axis=-1):
    """Log-softmax along `axis`, shift-stabilized with a detached max."""
    shift = constant(t.data.max(axis=axis, keepdims=True))
    u = t - shift
    return u - u.exp().sum(axis=axis, keepdims=True).log()
