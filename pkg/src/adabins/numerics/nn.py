"""Module containers and the few layers the model needs."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import ops
from .tensor import Parameter, Tensor, get_default_dtype


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Parameter:
    """Uniform in ±sqrt(1/fan_in), drawn in float64 then cast to the default dtype."""
    bound = math.sqrt(1.0 / fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape).astype(get_default_dtype()))


def zeros_param(shape) -> Parameter:
    return Parameter(np.zeros(shape, dtype=get_default_dtype()))


class Module:
    """Base class: attributes that are Parameters or Modules form the tree.

    Parameter names are dot-paths derived from attribute names in assignment
    order, so they are stable for a given architecture. Walking the tree also
    stamps each Parameter's ``name``.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(value, Parameter):
                value.name = path
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")
                    elif isinstance(item, Parameter):
                        item.name = f"{path}.{i}"
                        yield item.name, item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch; missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Conv2d(Module):
    def __init__(self, rng, cin, cout, kernel_size, stride=1, padding=0, bias=True, zero_bias=False):
        fan_in = cin * kernel_size * kernel_size
        self.weight = uniform_init(rng, (cout, cin, kernel_size, kernel_size), fan_in)
        if bias:
            self.bias = zeros_param((cout,)) if zero_bias else uniform_init(rng, (cout,), fan_in)
        else:
            self.bias = None
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    """``y = x @ W + b`` with ``W`` stored as (in, out)."""

    def __init__(self, rng, n_in, n_out, bias=True):
        self.weight = uniform_init(rng, (n_in, n_out), n_in)
        self.bias = uniform_init(rng, (n_out,), n_in) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        return y if self.bias is None else y + self.bias


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.gain = Parameter(np.ones(dim, dtype=get_default_dtype()))
        self.bias = zeros_param((dim,))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias, axis=-1, eps=self.eps)
