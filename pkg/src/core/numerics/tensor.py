# coding: utf-8
"""
Dense float64 tensor with tape-free reverse-mode differentiation.

Each operation records its parents and a closure mapping the output gradient
to per-parent gradients; ``backward`` walks the graph in reverse topological
order. Broadcasting follows numpy and gradients are summed back to the
operand shape.
"""
from __future__ import annotations

import logging
from contextlib import contextmanager
from typing import Callable, Iterable, Iterator, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from core.errors import DegenerateInputError

# --- Logger Setup ---
logger = logging.getLogger(__name__)

# --- Type Definitions ---
ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

# --- Grad Mode ---
_GRAD_ENABLED = True  # no_grad() の中だけ False


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block (evaluation passes)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------
# Tensor
# ---------------------------


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")
    # ndarray <op> Tensor must dispatch to the Tensor reflected operators
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 _parents: Tuple["Tensor", ...] = (), _backward: Optional[BackwardFn] = None,
                 _op: str = ""):
        if isinstance(data, Tensor):
            data = data.data
        self.data: np.ndarray = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    # --- basic accessors ---
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # --- graph plumbing ---
    @staticmethod
    def _make(data: np.ndarray, parents: Tuple["Tensor", ...], backward: BackwardFn, op: str) -> "Tensor":
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            return Tensor(data, requires_grad=True, _parents=parents, _backward=backward, _op=op)
        return Tensor(data)

    def backward(self, grad: Optional[ArrayLike] = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf requiring grad."""
        if not self.requires_grad:
            return
        if grad is None:
            if self.data.size != 1:
                raise DegenerateInputError("backward() without a seed gradient needs a scalar output")
            seed = np.ones_like(self.data)
        else:
            seed = np.broadcast_to(np.asarray(grad, dtype=np.float64), self.data.shape).copy()

        # iterative topological sort (graphs can be deep for long queues)
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                # 葉ノード: 勾配を累積
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg, parent.data.shape)
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # --- arithmetic ---
    def __add__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        return Tensor._make(self.data + other.data, (self, other), lambda g: (g, g), "add")

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        return Tensor._make(self.data - other.data, (self, other), lambda g: (g, -g), "sub")

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._make(a * b, (self, other), lambda g: (g * b, g * a), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._make(a / b, (self, other), lambda g: (g / b, -g * a / (b * b)), "div")

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) / self

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent: float) -> "Tensor":
        a = self.data
        p = float(exponent)
        return Tensor._make(a ** p, (self,), lambda g: (g * p * a ** (p - 1.0),), f"pow{p:g}")

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2:
            raise DegenerateInputError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
        return Tensor._make(a @ b, (self, other), lambda g: (g @ b.T, a.T @ g), "matmul")

    def __rmatmul__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) @ self

    # --- elementwise functions ---
    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out,), "exp")

    def log(self) -> "Tensor":
        a = self.data
        return Tensor._make(np.log(a), (self,), lambda g: (g / a,), "log")

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)
        return Tensor._make(out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def leaky_relu(self, slope: float = 0.2) -> "Tensor":
        scale = np.where(self.data > 0, 1.0, slope)
        return Tensor._make(self.data * scale, (self,), lambda g: (g * scale,), "leaky_relu")

    def softplus(self) -> "Tensor":
        a = self.data
        # log(1 + e^a) without overflow; derivative is the logistic sigmoid
        return Tensor._make(np.logaddexp(0.0, a), (self,), lambda g: (g * expit(a),), "softplus")

    # --- reductions / shape ---
    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        shape = self.data.shape

        def _bw(g: np.ndarray):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), _bw, "sum")

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def logsumexp(self, axis: int = -1, keepdims: bool = False) -> "Tensor":
        a = self.data
        peak = np.max(a, axis=axis, keepdims=True)
        shifted = np.exp(a - peak)
        total = shifted.sum(axis=axis, keepdims=True)
        out = peak + np.log(total)
        weights = shifted / total

        def _bw(g: np.ndarray):
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (g * weights,)

        value = out if keepdims else np.squeeze(out, axis=axis)
        return Tensor._make(value, (self,), _bw, "logsumexp")

    def reshape(self, *shape: int) -> "Tensor":
        orig = self.data.shape
        return Tensor._make(self.data.reshape(*shape), (self,), lambda g: (g.reshape(orig),), "reshape")

    def transpose(self) -> "Tensor":
        return Tensor._make(self.data.T, (self,), lambda g: (g.T,), "transpose")

    def __getitem__(self, idx) -> "Tensor":
        shape = self.data.shape

        def _bw(g: np.ndarray):
            full = np.zeros(shape)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._make(self.data[idx], (self,), _bw, "getitem")

    def l2_normalize(self, axis: int = -1) -> "Tensor":
        """Scale slices along ``axis`` to unit Euclidean norm."""
        a = self.data
        norm = np.sqrt(np.sum(a * a, axis=axis, keepdims=True))
        if np.any(norm == 0.0):
            raise DegenerateInputError("cannot normalize a zero vector")
        out = a / norm

        def _bw(g: np.ndarray):
            return ((g - out * np.sum(g * out, axis=axis, keepdims=True)) / norm,)

        return Tensor._make(out, (self,), _bw, "l2_normalize")


# ---------------------------
# ヘルパー
# ---------------------------


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: Iterable[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def _bw(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), _bw, "concat")
