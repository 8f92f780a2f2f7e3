"""Differentiable primitives.

Each function takes Tensors (or array-likes), computes the forward result on
``.data`` and registers a backward closure returning one gradient per parent.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from ..errors import DimensionError
from .tensor import Tensor, as_tensor, note_branch


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _lift(a, b):
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    return a, b


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _lift(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _lift(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _lift(a, b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _lift(a, b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(out, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    if exponent == 2:
        return Tensor._from_op(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))
    out = a.data ** exponent
    return Tensor._from_op(out, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * 0.5 / out,))


def abs(a) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    sign = np.sign(a.data)
    note_branch(sign)
    return Tensor._from_op(np.abs(a.data), (a,), lambda g: (g * sign,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor._from_op(out, (a,), lambda g: (g * out * (1.0 - out),))


# ---------------------------------------------------------------------------
# activations


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    note_branch(pos)
    return Tensor._from_op(np.where(pos, x.data, 0).astype(x.dtype), (x,), lambda g: (g * pos,))


def leaky_relu(x, slope: float = 0.01) -> Tensor:
    x = as_tensor(x)
    neg_side = x.data < 0
    note_branch(neg_side)
    scale = np.where(neg_side, slope, 1.0).astype(x.dtype)
    # derivative at exactly 0 is taken from the positive branch
    return Tensor._from_op(x.data * scale, (x,), lambda g: (g * scale,))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x) -> Tensor:
    """Exact (erf-based) GELU."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = (x.data * cdf).astype(x.dtype)

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return Tensor._from_op(out, (x,), backward)


def activation(x, kind: str, slope: float = 0.01) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "gelu":
        return gelu(x)
    raise ValueError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# reductions and shape manipulation


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return Tensor._from_op(np.asarray(out), (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mul(sum(x, axis, keepdims), 1.0 / count)


def cast(x, dtype) -> Tensor:
    """Change precision; the gradient is cast back to the input's dtype."""
    x = as_tensor(x)
    if x.dtype == np.dtype(dtype):
        return x
    return Tensor._from_op(x.data.astype(dtype), (x,), lambda g: (g.astype(x.dtype),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return Tensor._from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return Tensor._from_op(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def getitem(x, index) -> Tensor:
    x = as_tensor(x)
    if isinstance(index, Tensor):
        index = index.data
    out = x.data[index]
    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return Tensor._from_op(np.array(out, copy=not basic) if basic else out, (x,), backward)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in items)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return Tensor._from_op(out, tensors, backward)


def cumsum(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return Tensor._from_op(np.cumsum(x.data, axis=axis), (x,), backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Batched matrix product with broadcasting over leading dims."""
    a, b = _lift(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs ≥2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dims differ: a axis -1 has {a.shape[-1]}, b axis -2 has {b.shape[-2]}"
        )
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"matmul batch dims not broadcastable: {a.shape} vs {b.shape}") from exc

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(out, (a, b), backward)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward)


def layer_norm(x, gain, bias, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalize along ``axis`` then apply ``gain * xhat + bias``.

    ``gain`` and ``bias`` must broadcast against the normalized axis only.
    """
    x, gain = _lift(x, gain)
    bias = as_tensor(bias)
    n = x.shape[axis]
    if gain.shape[-1] != n or bias.shape[-1] != n:
        raise DimensionError(f"layer_norm gain/bias extent must be {n}, got {gain.shape}, {bias.shape}")
    if axis not in (-1, x.ndim - 1):
        # move the axis last, normalize, move back
        moved = transpose(x, _move_last(x.ndim, axis))
        out = layer_norm(moved, gain, bias, -1, eps)
        return transpose(out, tuple(np.argsort(_move_last(x.ndim, axis))))

    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        gx = None
        if x.requires_grad:
            gh = g * gain.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        gg = _unbroadcast(g * xhat, gain.shape) if gain.requires_grad else None
        gb = _unbroadcast(g, bias.shape) if bias.requires_grad else None
        return gx, gg, gb

    return Tensor._from_op(out, (x, gain, bias), backward)


def _move_last(ndim, axis):
    axis = axis % ndim
    return tuple(i for i in range(ndim) if i != axis) + (axis,)


# ---------------------------------------------------------------------------
# convolution and resampling


def conv2d(x, kernel, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation over NCHW input via im2col + a single matmul."""
    x, kernel = _lift(x, kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x.shape} and {kernel.shape}")
    B, cin, H, W = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise DimensionError(f"conv2d channel mismatch: input axis 1 has {cin}, kernel axis 1 has {kcin}")
    if stride < 1 or kh < 1 or kw < 1:
        raise DimensionError("conv2d needs stride ≥ 1 and kernel extents ≥ 1")
    if H + 2 * padding < kh or W + 2 * padding < kw:
        raise DimensionError(
            f"conv2d kernel {kh}x{kw} larger than padded input {H + 2 * padding}x{W + 2 * padding} (axes 2, 3)"
        )
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
    # rows are output pixels (b, i, j); columns are (cin, kh, kw)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B * Ho * Wo, cin * kh * kw)
    wmat = kernel.data.reshape(cout, -1)
    out2d = cols @ wmat.T
    if bias is not None:
        bias = as_tensor(bias)
        out2d = out2d + bias.data
    out = np.ascontiguousarray(out2d.reshape(B, Ho, Wo, cout).transpose(0, 3, 1, 2))

    def backward(g):
        g2d = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gk = (g2d.T @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (g2d @ wmat).reshape(B, Ho, Wo, cin, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += dcols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding : padding + H, padding : padding + W] if padding else gxp
        grads = [gx, gk]
        if bias is not None:
            grads.append(g2d.sum(axis=0) if bias.requires_grad else None)
        return tuple(grads)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor._from_op(out, parents, backward)


def interpolation_matrix(n_in: int, factor: int, dtype=np.float64) -> np.ndarray:
    """Linear resampling weights with half-pixel centers (align_corners=False).

    Row ``i`` of the returned ``(n_in*factor, n_in)`` matrix holds the weights
    that produce output sample ``i``; source coordinates are clamped at the edges.
    """
    n_out = n_in * factor
    src = (np.arange(n_out) + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    m = np.zeros((n_out, n_in), dtype=dtype)
    np.add.at(m, (np.arange(n_out), lo), 1.0 - frac)
    np.add.at(m, (np.arange(n_out), hi), frac)
    return m


def bilinear_upsample(x, factor: int) -> Tensor:
    """Upsample the last two axes by an integer factor; separable A_h @ x @ A_w^T."""
    x = as_tensor(x)
    if factor < 1:
        raise ValueError("factor must be ≥ 1")
    if factor == 1:
        return x
    ah = interpolation_matrix(x.shape[-2], factor, x.dtype)
    aw = interpolation_matrix(x.shape[-1], factor, x.dtype)
    out = ah @ x.data @ aw.T

    def backward(g):
        return (ah.T @ g @ aw,)

    return Tensor._from_op(out, (x,), backward)


def upsample_nearest(x, factor: int) -> Tensor:
    x = as_tensor(x)
    if factor == 1:
        return x
    out = x.data.repeat(factor, axis=-2).repeat(factor, axis=-1)

    def backward(g):
        s = g.shape
        g = g.reshape(s[:-2] + (s[-2] // factor, factor, s[-1] // factor, factor))
        return (g.sum(axis=(-3, -1)),)

    return Tensor._from_op(out, (x,), backward)
