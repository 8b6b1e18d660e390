"""A small reverse-mode automatic differentiation engine over numpy arrays.

Complex quantities are carried as separate real and imaginary tensors, so every
gradient here is a real partial derivative.  Each op records a closure that maps
the output gradient to gradients of its inputs; :func:`backward` walks the
recorded graph once in reverse topological order and then releases it.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class GraphConsumedError(RuntimeError):
    """Raised when a graph is differentiated twice or reused after backward."""


class ShapeError(ValueError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self._consumed = False

    @classmethod
    def from_op(cls, data, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        """Record a new node.

        ``backward(g)`` must return one gradient (or ``None``) per parent, shaped
        like that parent's data.
        """
        for p in parents:
            if p._consumed:
                raise GraphConsumedError("cannot build on a graph that has already been differentiated")
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # arithmetic

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor.from_op(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data
        return Tensor.from_op(
            x * y,
            (self, other),
            lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data
        return Tensor.from_op(
            x / y,
            (self, other),
            lambda g: (_unbroadcast(g / y, x.shape), _unbroadcast(-g * x / (y * y), y.shape)),
        )

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent: float):
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        x = self.data
        return Tensor.from_op(x**exponent, (self,), lambda g: (g * exponent * x ** (exponent - 1),))

    def __matmul__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data
        if x.ndim > 2 or y.ndim > 2:
            raise ShapeError("matmul supports 1-D and 2-D operands only")
        if x.shape[-1] != y.shape[0]:
            raise ShapeError(f"matmul shape mismatch {x.shape} @ {y.shape}")

        def backward(g):
            if y.ndim == 1:
                gx = np.outer(g, y) if x.ndim == 2 else g * y
                gy = x.T @ g if x.ndim == 2 else g * x
            elif x.ndim == 1:
                gx = y @ g
                gy = np.outer(x, g)
            else:
                gx = g @ y.T
                gy = x.T @ g
            return gx, gy

        return Tensor.from_op(x @ y, (self, other), backward)

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    # shape ops

    def __getitem__(self, index):
        x = self.data

        def backward(g):
            out = np.zeros_like(x)
            np.add.at(out, index, g)
            return (out,)

        return Tensor.from_op(x[index], (self,), backward)

    def reshape(self, *shape):
        orig = self.shape
        return Tensor.from_op(self.data.reshape(*shape), (self,), lambda g: (g.reshape(orig),))

    @property
    def T(self):
        return Tensor.from_op(self.data.T, (self,), lambda g: (g.T,))

    # reductions

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor.from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # elementwise nonlinearities

    def relu(self):
        x = self.data
        return Tensor.from_op(np.maximum(x, 0.0), (self,), lambda g: (g * (x > 0),))

    def exp(self):
        y = np.exp(self.data)
        return Tensor.from_op(y, (self,), lambda g: (g * y,))

    def log(self):
        x = self.data
        return Tensor.from_op(np.log(x), (self,), lambda g: (g / x,))

    def sqrt(self):
        y = np.sqrt(self.data)
        return Tensor.from_op(y, (self,), lambda g: (g * 0.5 / y,))

    def softplus(self):
        """``log(1 + exp(x))`` without overflow."""
        x = self.data
        y = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
        return Tensor.from_op(y, (self,), lambda g: (g * _sigmoid(x),))

    def clip(self, lo: float, hi: float):
        x = self.data
        inside = (x >= lo) & (x <= hi)
        return Tensor.from_op(np.clip(x, lo, hi), (self,), lambda g: (g * inside,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor.from_op(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def softmax(logits: Tensor, axis: int = -1) -> Tensor:
    """Row softmax; the max is subtracted as a constant so nothing overflows."""
    shifted = logits - np.max(logits.data, axis=axis, keepdims=True)
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


def _topological(root: Tensor) -> list:
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor, seed_grad=None) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf requiring grad.

    The recorded graph is released afterwards; calling this twice on the same
    loss raises :class:`GraphConsumedError`.
    """
    if loss._consumed:
        raise GraphConsumedError("this graph has already been differentiated")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor requiring grad")
    if seed_grad is None:
        if loss.size != 1:
            raise ShapeError("backward without seed_grad needs a scalar loss")
        seed_grad = np.ones_like(loss.data)
    grads = {id(loss): np.asarray(seed_grad, dtype=np.float64)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if node._backward is None:
            if g is not None:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if g is not None:
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
        node._parents = ()
        node._backward = None
        node._consumed = True


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def grad(loss: Tensor, params: Sequence[Tensor]) -> list:
    """Gradients of a scalar ``loss`` w.r.t. ``params`` (zeros where unused)."""
    zero_grad(params)
    backward(loss)
    return [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]
