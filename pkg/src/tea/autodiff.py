"""Reverse-mode automatic differentiation over numpy arrays.

Small tape-based engine: every operation returns a new :class:`Tensor`
holding the forward value and, when gradients are enabled, a closure that
scatters the incoming gradient back to its parents. Works for any float
dtype; the gradient-check suites exercise it in 64-bit mode.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf as _erf

_GRAD_ENABLED = True

_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the context (evaluation forwards)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


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
    return grad.reshape(shape)


class Tensor:
    """An ndarray plus the bookkeeping needed for reverse-mode backward."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "_grad_aliased")
    __array_priority__ = 100  # keep numpy from hijacking reflected ops

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._grad_aliased = False

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"],
              backward: Callable[[np.ndarray], None]) -> "Tensor":
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        # Copy-on-second-write: the first contribution is stored by reference
        # (it may alias another node's gradient or a view, so it is never
        # mutated in place); a second contribution materializes an owned
        # buffer, after which accumulation is in place.
        if self.grad is None:
            self.grad = grad
            self._grad_aliased = True
        elif self._grad_aliased:
            self.grad = self.grad + grad
            self._grad_aliased = False
        else:
            self.grad += grad

    # -- basic properties ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None
        self._grad_aliased = False

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # -- arithmetic -------------------------------------------------------------
    # Python scalars take a fast path: weak dtype promotion (a float32 graph
    # stays float32) and a constant-free backward closure.

    def __add__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            value = float(other)

            def backward_scalar(g):
                self._accumulate(g)

            return Tensor._make(self.data + value, (self,), backward_scalar)
        other = as_tensor(other)
        data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))

        return Tensor._make(data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def backward(g):
            self._accumulate(-g)

        return Tensor._make(-self.data, (self,), backward)

    def __sub__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            return self + (-other)
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return (-self) + other

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            value = float(other)

            def backward_scalar(g):
                self._accumulate(g * value)

            return Tensor._make(self.data * value, (self,), backward_scalar)
        other = as_tensor(other)
        data = self.data * other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))

        return Tensor._make(data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            return self * (1.0 / other)
        other = as_tensor(other)
        data = self.data / other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / (other.data * other.data), other.shape))

        return Tensor._make(data, (self, other), backward)

    def __rtruediv__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            data = float(other) / self.data

            def backward(g):
                self._accumulate(-g * data / self.data)

            return Tensor._make(data, (self,), backward)
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        data = self.data ** exponent

        def backward(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1))

        return Tensor._make(data, (self,), backward)

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        if self.ndim < 2 or other.ndim < 2:
            raise ValueError("matmul operands must be at least 2-D")
        data = self.data @ other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g @ other.data.swapaxes(-1, -2), self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(self.data.swapaxes(-1, -2) @ g, other.shape))

        return Tensor._make(data, (self, other), backward)

    # -- shape ops ----------------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        data = self.data.reshape(shape)

        def backward(g):
            self._accumulate(g.reshape(old))

        return Tensor._make(data, (self,), backward)

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        axes = tuple(axes)
        inverse = tuple(np.argsort(axes))
        data = self.data.transpose(axes)

        def backward(g):
            self._accumulate(g.transpose(inverse))

        return Tensor._make(data, (self,), backward)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(axes)

    def expand(self, shape: Sequence[int]) -> "Tensor":
        shape = tuple(shape)
        old = self.shape
        data = np.broadcast_to(self.data, shape)

        def backward(g):
            self._accumulate(_unbroadcast(g, old))

        return Tensor._make(data, (self,), backward)

    def __getitem__(self, key) -> "Tensor":
        data = self.data[key]
        shape = self.shape
        parts = key if isinstance(key, tuple) else (key,)
        basic = all(isinstance(p, (int, slice, type(Ellipsis), type(None)))
                    for p in parts)

        def backward(g):
            full = np.zeros(shape, dtype=g.dtype)
            if basic:
                full[key] += g  # basic indexing cannot repeat positions
            else:
                np.add.at(full, key, g)
            self._accumulate(full)

        return Tensor._make(data, (self,), backward)

    # -- reductions ------------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.shape

        def backward(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, shape).copy())
                return
            if not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, shape).copy())

        return Tensor._make(data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- elementwise nonlinearities ----------------------------------------------------

    def exp(self) -> "Tensor":
        data = np.exp(self.data)

        def backward(g):
            self._accumulate(g * data)

        return Tensor._make(data, (self,), backward)

    def log(self) -> "Tensor":
        data = np.log(self.data)

        def backward(g):
            self._accumulate(g / self.data)

        return Tensor._make(data, (self,), backward)

    def sqrt(self) -> "Tensor":
        data = np.sqrt(self.data)

        def backward(g):
            self._accumulate(g * 0.5 / data)

        return Tensor._make(data, (self,), backward)

    def tanh(self) -> "Tensor":
        data = np.tanh(self.data)

        def backward(g):
            self._accumulate(g * (1.0 - data * data))

        return Tensor._make(data, (self,), backward)

    def erf(self) -> "Tensor":
        data = _erf(self.data)

        def backward(g):
            self._accumulate(g * 2.0 * _INV_SQRT_PI * np.exp(-self.data * self.data))

        return Tensor._make(data, (self,), backward)

    # -- backward driver -----------------------------------------------------------------

    def backward(self, gradient: np.ndarray | None = None) -> None:
        """Backpropagate from this tensor through the recorded graph."""
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if gradient is None:
            if self.size != 1:
                raise RuntimeError("gradient argument required for non-scalar backward")
            gradient = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.asarray(gradient))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node is not self and not isinstance(node, Parameter):
                    node.grad = None  # free intermediate gradients early


class Parameter(Tensor):
    """A trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(np.asarray(data), requires_grad=True)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


# -- free-function ops ------------------------------------------------------------


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(start, stop)
                t._accumulate(g[tuple(index)])

    return Tensor._make(data, tensors, backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    data = x.data - x.data.max(axis=axis, keepdims=True)
    np.exp(data, out=data)
    data /= data.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        x._accumulate(data * (g - inner))

    return Tensor._make(data, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - log_z

    def backward(g):
        x._accumulate(g - np.exp(data) * g.sum(axis=axis, keepdims=True))

    return Tensor._make(data, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Fused last-axis layer normalization with affine parameters."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_sigma = 1.0 / np.sqrt(var + eps)
    normed = centered * inv_sigma
    data = normed * gamma.data + beta.data

    def backward(g):
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=tuple(range(g.ndim - 1))))
        if gamma.requires_grad:
            gamma._accumulate((g * normed).sum(axis=tuple(range(g.ndim - 1))))
        if x.requires_grad:
            dy = g * gamma.data
            x._accumulate(inv_sigma * (
                dy - dy.mean(axis=-1, keepdims=True)
                - normed * (dy * normed).mean(axis=-1, keepdims=True)))

    return Tensor._make(data, (x, gamma, beta), backward)


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row lookup `table[indices]` with scatter-add backward."""
    indices = np.asarray(indices)
    data = table.data[indices]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, indices.reshape(-1), g.reshape(-1, table.shape[-1]))
        table._accumulate(full)

    return Tensor._make(data, (table,), backward)


def select_columns(x: Tensor, indices: np.ndarray) -> Tensor:
    """Pick `x[i, indices[i]]` from a 2-D tensor; used for label gathers."""
    indices = np.asarray(indices)
    rows = np.arange(x.shape[0])
    data = x.data[rows, indices]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (rows, indices), g)
        x._accumulate(full)

    return Tensor._make(data, (x,), backward)


_INV_SQRT_2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-error GELU x * Phi(x), as one fused graph node."""
    cdf = _erf(x.data * _INV_SQRT_2)
    cdf += 1.0
    cdf *= 0.5
    data = x.data * cdf

    def backward(g):
        pdf = np.exp(x.data * x.data * -0.5)
        pdf *= _INV_SQRT_2PI
        x._accumulate(g * (cdf + x.data * pdf))

    return Tensor._make(data, (x,), backward)

