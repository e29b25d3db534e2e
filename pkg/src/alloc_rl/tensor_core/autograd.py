"""Reverse-mode automatic differentiation over float64 numpy arrays.

Each op returns a new :class:`Tensor` that remembers its parents and a
closure propagating the output gradient back to them. ``backward`` runs the
closures in reverse topological order. Graph recording is skipped entirely
inside :func:`no_grad` and for ops whose inputs do not require gradients.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import NoGraph, NotScalar, ShapeMismatch

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def as_tensor(x) -> "Tensor":
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward", "name")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._prev = ()
        self._backward = None
        self.name = name

    # ------------------------------------------------------------ plumbing
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    @staticmethod
    def _make(data, parents, backward) -> "Tensor":
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._prev = parents
            out._backward = backward
        return out

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.data.shape)
        else:
            self.grad = self.grad + g

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise NotScalar(f"backward() needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            raise NoGraph("tensor was not produced by a recorded computation")
        # nodes hash by identity, so they key the visit set and grad table directly
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if node in seen:
                continue
            seen.add(node)
            stack.append((node, True))
            for p in node._prev:
                if p.requires_grad and p not in seen:
                    stack.append((p, False))
        grads = {self: np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(node, None)
            if g is None:
                continue
            if node._backward is None:
                node._accum(g)
                continue
            for parent, pg in zip(node._prev, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                grads[parent] = grads[parent] + pg if parent in grads else pg

    # ------------------------------------------------------------ arithmetic
    def __add__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._make(
            a + b, (self, other),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._make(
            a - b, (self, other),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        )

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._make(
            a * b, (self, other),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._make(
            a / b, (self, other),
            lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)),
        )

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, k: float):
        a = self.data
        return Tensor._make(a**k, (self,), lambda g: (g * k * a ** (k - 1),))

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        if a.shape[-1] != b.shape[0]:
            raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")

        def back(g):
            if a.ndim == 2 and b.ndim == 2:
                return g @ b.T, a.T @ g
            if a.ndim == 1 and b.ndim == 2:
                return b @ g, np.outer(a, g)
            if a.ndim == 2:
                return np.outer(g, b), a.T @ g
            return g * b, g * a

        return Tensor._make(a @ b, (self, other), back)

    # ------------------------------------------------------------ elementwise
    def exp(self):
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out,))

    def log(self):
        a = self.data
        return Tensor._make(np.log(a), (self,), lambda g: (g / a,))

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor._make(out, (self,), lambda g: (g * (1.0 - out * out),))

    def relu(self):
        mask = self.data > 0
        return Tensor._make(self.data * mask, (self,), lambda g: (g * mask,))

    def square(self):
        return self * self

    def abs(self):
        a = self.data
        return Tensor._make(np.abs(a), (self,), lambda g: (g * np.sign(a),))

    def clip(self, lo, hi):
        """Clamp values; gradient is zero where the clamp is active."""
        a = self.data
        mask = (a >= lo) & (a <= hi)
        return Tensor._make(np.clip(a, lo, hi), (self,), lambda g: (g * mask,))

    # ------------------------------------------------------------ reductions / shape
    def sum(self, axis=None, keepdims: bool = False):
        shape = self.data.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        old = self.data.shape
        return Tensor._make(self.data.reshape(*shape), (self,), lambda g: (g.reshape(old),))

    @property
    def T(self):
        return Tensor._make(self.data.T, (self,), lambda g: (g.T,))

    def __getitem__(self, idx):
        shape = self.data.shape

        def back(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return (out,)

        return Tensor._make(self.data[idx], (self,), back)


# ---------------------------------------------------------------- free functions


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return Tensor._make(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def linear(x, W: Tensor, b: Tensor, activation: str | None = None) -> Tensor:
    """Fused ``act(x @ W + b)`` recorded as a single graph node."""
    x = as_tensor(x)
    xd, wd = x.data, W.data
    if xd.shape[-1] != wd.shape[0]:
        raise ShapeMismatch(f"matmul {xd.shape} @ {wd.shape}")
    z = xd @ wd + b.data
    if activation == "relu":
        mask = z > 0
        out = z * mask
    elif activation == "tanh":
        out = np.tanh(z)
    else:
        out = z

    def back(g):
        if activation == "relu":
            g = g * mask
        elif activation == "tanh":
            g = g * (1.0 - out * out)
        if xd.ndim == 1:
            return g @ wd.T, np.outer(xd, g), g
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return Tensor._make(out, (x, W, b), back)


def minimum(a, b) -> Tensor:
    """Elementwise min; ties route the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    return Tensor._make(
        np.where(pick_a, a.data, b.data), (a, b),
        lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)),
    )


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor._make(s, (x,), back)


def where(cond, a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    return Tensor._make(
        np.where(cond, a.data, b.data), (a, b),
        lambda g: (_unbroadcast(g * cond, a.shape), _unbroadcast(g * ~cond, b.shape)),
    )
