"""Tensor type with reverse-mode automatic differentiation.

Every differentiable op creates a new :class:`Tensor` that records its parents
and a closure mapping the output gradient to one gradient per parent.
:meth:`Tensor.backward` walks the graph in reverse topological order and
accumulates gradients with ``+=`` so fan-out is handled naturally.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import UsageError

_DEFAULT_DTYPE = np.float32
_DEBUG_CHECKS = False
_BRANCH_LOG: Optional[list] = None


def get_default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default float dtype (float64 is for gradient checks)."""
    old = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


@contextlib.contextmanager
def debug_checks(enabled: bool = True):
    """Raise FloatingPointError as soon as any op produces a non-finite value."""
    global _DEBUG_CHECKS
    old = _DEBUG_CHECKS
    _DEBUG_CHECKS = enabled
    try:
        yield
    finally:
        _DEBUG_CHECKS = old


@contextlib.contextmanager
def record_branches():
    """Collect the discrete choices made by piecewise ops (signs, argmins).

    Two evaluations that log the same choices lie on the same smooth piece,
    which is what a finite-difference probe needs to be meaningful.
    """
    global _BRANCH_LOG
    old = _BRANCH_LOG
    _BRANCH_LOG = []
    try:
        yield _BRANCH_LOG
    finally:
        _BRANCH_LOG = old


def note_branch(choice: np.ndarray) -> None:
    if _BRANCH_LOG is not None:
        _BRANCH_LOG.append(np.ascontiguousarray(choice).tobytes())


class Tensor:
    """N-dimensional array with optional gradient tracking.

    Attributes:
        data: the underlying ``np.ndarray`` (row-major).
        requires_grad: whether gradients flow to this tensor.
        grad: accumulated gradient, same shape as ``data``, or None.
    """

    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind != "f":
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None

    # -- construction helpers -------------------------------------------
    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        if _DEBUG_CHECKS and not np.all(np.isfinite(data)):
            raise FloatingPointError(f"non-finite value produced by {backward.__qualname__}")
        out = cls.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
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

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- autodiff ---------------------------------------------------------
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Backpropagate from this scalar through the recorded graph."""
        if grad is None:
            if self.data.size != 1:
                raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            raise UsageError("backward() on a tensor that does not require grad")

        order = _topological_order(self)
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            node.grad = g
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar; implementations live in ops --------------------
    def __add__(self, other):
        return _ops().add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _ops().sub(self, other)

    def __rsub__(self, other):
        return _ops().sub(other, self)

    def __mul__(self, other):
        return _ops().mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _ops().div(self, other)

    def __rtruediv__(self, other):
        return _ops().div(other, self)

    def __neg__(self):
        return _ops().neg(self)

    def __pow__(self, exponent):
        return _ops().power(self, exponent)

    def __matmul__(self, other):
        return _ops().matmul(self, other)

    def __getitem__(self, index):
        return _ops().getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return _ops().sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return _ops().mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops().reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _ops().transpose(self, axes or None)

    def exp(self):
        return _ops().exp(self)

    def log(self):
        return _ops().log(self)

    def sqrt(self):
        return _ops().sqrt(self)


class Parameter(Tensor):
    """A trainable leaf tensor; its name is assigned by the owning module."""

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype or _DEFAULT_DTYPE)
        self.name: str = ""

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_DEFAULT_DTYPE))


def _topological_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _ops():
    from . import ops

    return ops
