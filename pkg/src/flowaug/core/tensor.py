"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation records a backward closure on the output node, so calling
``backward()`` on a scalar loss fills ``grad`` on every reachable input.
All buffers are float64 and row-major; any operation that produces a
non-finite value raises immediately instead of letting NaN/Inf propagate.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

__all__ = ["Tensor", "Parameter", "gradient", "concat", "narrow"]


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise ArithmeticError(f"non-finite values produced by '{op}'")


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
    """One node of the computation tape.

    Leaf tensors are plain value carriers; tensors produced by operations
    hold references to their parents and a closure that propagates the
    output gradient back to them.
    """

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, _parents: tuple = (), _op: str = "leaf"):
        self.data = _as_array(data)
        _check_finite(self.data, _op)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = None

    # -- bookkeeping ------------------------------------------------------

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

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Reverse sweep from a scalar node, accumulating parent gradients."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.data.shape}")
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, int]] = [(self, 0)]
        while stack:
            node, idx = stack.pop()
            if idx == 0:
                if id(node) in visited:
                    continue
                visited.add(id(node))
            if idx < len(node._parents):
                stack.append((node, idx + 1))
                child = node._parents[idx]
                if id(child) not in visited:
                    stack.append((child, 0))
            else:
                order.append(node)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic -------------------------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = Tensor._lift(other)
        out = Tensor(self.data + other.data, (self, other), "add")

        def bwd(g):
            self._accum(_unbroadcast(g, self.data.shape))
            other._accum(_unbroadcast(g, other.data.shape))

        out._backward = bwd
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = Tensor._lift(other)
        out = Tensor(self.data * other.data, (self, other), "mul")

        def bwd(g):
            self._accum(_unbroadcast(g * other.data, self.data.shape))
            other._accum(_unbroadcast(g * self.data, other.data.shape))

        out._backward = bwd
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-Tensor._lift(other))

    def __rsub__(self, other):
        return Tensor._lift(other) + (-self)

    def __truediv__(self, other):
        other = Tensor._lift(other)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = Tensor(self.data / other.data, (self, other), "div")

        def bwd(g):
            self._accum(_unbroadcast(g / other.data, self.data.shape))
            other._accum(
                _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
            )

        out._backward = bwd
        return out

    def __matmul__(self, other):
        other = Tensor._lift(other)
        out = Tensor(self.data @ other.data, (self, other), "matmul")

        def bwd(g):
            ga = g @ np.swapaxes(other.data, -1, -2)
            gb = np.swapaxes(self.data, -1, -2) @ g
            self._accum(_unbroadcast(ga, self.data.shape))
            other._accum(_unbroadcast(gb, other.data.shape))

        out._backward = bwd
        return out

    def pow(self, p: float):
        """Elementwise power with constant exponent."""
        out = Tensor(self.data**p, (self,), "pow")

        def bwd(g):
            self._accum(g * p * self.data ** (p - 1.0))

        out._backward = bwd
        return out

    def exp(self):
        # the closure captures the value array, not the output tensor, so
        # the tape stays acyclic and is freed by refcounting alone
        e = np.exp(self.data)
        out = Tensor(e, (self,), "exp")

        def bwd(g):
            self._accum(g * e)

        out._backward = bwd
        return out

    def log(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = Tensor(np.log(self.data), (self,), "log")

        def bwd(g):
            self._accum(g / self.data)

        out._backward = bwd
        return out

    def abs(self):
        out = Tensor(np.abs(self.data), (self,), "abs")

        def bwd(g):
            self._accum(g * np.sign(self.data))

        out._backward = bwd
        return out

    def relu(self):
        # derivative at exactly 0 is 0 by convention
        out = Tensor(np.maximum(self.data, 0.0), (self,), "relu")

        def bwd(g):
            self._accum(g * (self.data > 0.0))

        out._backward = bwd
        return out

    def sigmoid(self):
        x = self.data
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        out = Tensor(s, (self,), "sigmoid")

        def bwd(g):
            self._accum(g * s * (1.0 - s))

        out._backward = bwd
        return out

    def softplus(self):
        x = self.data
        out = Tensor(np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0), (self,), "softplus")

        def bwd(g):
            x_ = self.data
            sig = np.where(x_ >= 0, 1.0 / (1.0 + np.exp(-np.abs(x_))), np.exp(-np.abs(x_)) / (1.0 + np.exp(-np.abs(x_))))
            self._accum(g * sig)

        out._backward = bwd
        return out

    # -- shape manipulation ------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), (self,), "reshape")

        def bwd(g):
            self._accum(g.reshape(self.data.shape))

        out._backward = bwd
        return out

    def transpose(self, axes: Sequence[int]):
        axes = tuple(axes)
        out = Tensor(np.transpose(self.data, axes), (self,), "transpose")
        inverse = tuple(np.argsort(axes))

        def bwd(g):
            self._accum(np.transpose(g, inverse))

        out._backward = bwd
        return out

    # -- reductions ---------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")
        src_shape = self.data.shape

        def bwd(g):
            gg = g
            if axis is not None and not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                axes = tuple(a % len(src_shape) for a in axes)
                kept = [1 if i in axes else n for i, n in enumerate(src_shape)]
                gg = g.reshape(kept)
            self._accum(np.broadcast_to(gg, src_shape))

        out._backward = bwd
        return out

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)


class Parameter(Tensor):
    """A named leaf tensor that persists across training steps."""

    __slots__ = ("name",)

    def __init__(self, name: str, value):
        super().__init__(value, (), f"parameter:{name}")
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def gradient(loss: Tensor, parameters: Iterable[Parameter]) -> list[np.ndarray]:
    """Populate ``p.grad`` with d(loss)/dp for each parameter.

    Parameters that the loss does not depend on get an exact zero gradient.
    """
    params = list(parameters)
    for p in params:
        p.grad = None
    loss.backward()
    grads = []
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        grads.append(p.grad)
    return grads


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    """Concatenate along `axis`; gradients are sliced back to each input."""
    tensors = list(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat")
    sizes = [t.data.shape[axis] for t in tensors]

    def bwd(g):
        start = 0
        for t, n in zip(tensors, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(start, start + n)
            t._accum(g[tuple(idx)])
            start += n

    out._backward = bwd
    return out


def narrow(t: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    idx = [slice(None)] * t.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Tensor(t.data[idx], (t,), "narrow")

    def bwd(g):
        full = np.zeros_like(t.data)
        full[idx] = g
        t._accum(full)

    out._backward = bwd
    return out
