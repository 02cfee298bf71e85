"""Minimal reverse-mode automatic differentiation over numpy arrays.

A `Tensor` wraps an ndarray plus an optional backward closure. Ops build a
DAG only when some input requires a gradient, so frozen-parameter branches
(the teacher network) run as plain numpy with nothing retained. `backward()`
does an iterative postorder topological sort and accumulates gradients into
the leaves.

Gradient correctness for every op is pinned by central finite differences in
the test suite; the finite-difference oracle never calls into this module's
backward path.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy import special as _sp

__all__ = ["Tensor", "tensor", "concat", "matmul"]

_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._bwd: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    # -- graph plumbing -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        """Constant view of this value: gradients stop here."""
        return Tensor(self.data)

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._bwd is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._bwd(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
            node.grad = None  # free intermediate grads; leaves keep theirs

    # -- operators ------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float)):
            a = self
            return _node(a.data + other, (a,), lambda g: (g,))
        a, b = self, wrap(other)
        return _node(a.data + b.data, (a, b), lambda g: (
            _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            a = self
            return _node(a.data - other, (a,), lambda g: (g,))
        a, b = self, wrap(other)
        return _node(a.data - b.data, (a, b), lambda g: (
            _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))

    def __rsub__(self, other):
        if isinstance(other, (int, float)):
            a = self
            return _node(other - a.data, (a,), lambda g: (-g,))
        return wrap(other).__sub__(self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            a = self
            return _node(a.data * other, (a,), lambda g: (g * other,))
        a, b = self, wrap(other)
        return _node(a.data * b.data, (a, b), lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return self * (1.0 / other)
        a, b = self, wrap(other)
        return _node(a.data / b.data, (a, b), lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)))

    def __rtruediv__(self, other):
        if isinstance(other, (int, float)):
            a = self
            return _node(other / a.data, (a,),
                         lambda g: (-g * other / (a.data * a.data),))
        return wrap(other).__truediv__(self)

    def __neg__(self):
        return _node(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, p: float):
        x = self
        return _node(x.data ** p, (x,), lambda g: (g * p * x.data ** (p - 1),))

    def __matmul__(self, other):
        return matmul(self, wrap(other))

    def __getitem__(self, key):
        x = self
        out = x.data[key]

        def bwd(g):
            gx = np.zeros_like(x.data)
            if _fancy(key):
                np.add.at(gx, key, g)
            else:
                gx[key] += g
            return (gx,)

        return _node(out, (x,), bwd)

    # -- shape ops ------------------------------------------------------

    def reshape(self, *shape):
        x = self
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _node(x.data.reshape(shape), (x,),
                     lambda g: (g.reshape(x.data.shape),))

    def transpose(self, *axes):
        x = self
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        return _node(x.data.transpose(axes), (x,),
                     lambda g: (g.transpose(inv),))

    def expand(self, shape):
        x = self
        return _node(np.broadcast_to(x.data, shape), (x,),
                     lambda g: (_unbroadcast(g, x.data.shape),))

    # -- reductions -----------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        x = self
        out = x.data.sum(axis=axis, keepdims=keepdims)

        def bwd(g):
            if not keepdims and axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=False),)

        return _node(out, (x,), bwd)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * float(1.0 / n)

    # -- elementwise nonlinearities --------------------------------------

    def exp(self):
        x = self
        out = np.exp(x.data)
        return _node(out, (x,), lambda g: (g * out,))

    def log(self):
        x = self
        return _node(np.log(x.data), (x,), lambda g: (g / x.data,))

    def sqrt(self):
        x = self
        out = np.sqrt(x.data)
        return _node(out, (x,), lambda g: (g * (0.5 / out),))

    def relu(self):
        x = self
        return _node(np.maximum(x.data, 0), (x,),
                     lambda g: (g * (x.data > 0),))

    def sigmoid(self):
        x = self
        out = _sp.expit(x.data)
        return _node(out, (x,), lambda g: (g * out * (1.0 - out),))

    def gelu(self):
        x = self
        cdf = 0.5 * (1.0 + _sp.erf(x.data * _INV_SQRT2))
        out = x.data * cdf

        def bwd(g):
            pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT2PI
            return (g * (cdf + x.data * pdf),)

        return _node(out, (x,), bwd)

    def softmax(self, axis: int = -1):
        x = self
        shifted = x.data - x.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)

        def bwd(g):
            dot = (g * out).sum(axis=axis, keepdims=True)
            return (out * (g - dot),)

        return _node(out, (x,), bwd)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"


def _fancy(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (np.ndarray, list)) for k in parts)


def _node(data, parents: tuple[Tensor, ...], bwd) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._bwd = bwd
    return out


def wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data, dtype=None, requires_grad: bool = False) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Stacked matrix product; operands must be at least 2-D."""
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")

    def bwd(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return (ga, gb)

    return _node(a.data @ b.data, (a, b), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [wrap(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in parts], axis=axis),
                 tuple(parts), bwd)
