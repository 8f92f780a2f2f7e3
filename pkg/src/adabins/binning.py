"""Bin-width strategies: fixed uniform, fixed log-uniform, trained-but-fixed, adaptive."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import ConfigError, UsageError
from .head import normalize_widths
from .numerics import ops
from .numerics.nn import Module
from .numerics.tensor import Parameter, Tensor, get_default_dtype

KINDS = ("uniform_fix", "log_fix", "train_fix", "adaptive")


def uniform_widths(n_bins: int) -> np.ndarray:
    return np.full(n_bins, 1.0 / n_bins)


def log_widths(n_bins: int, d_low: float, d_max: float) -> np.ndarray:
    """Widths of bins whose edges are equally spaced in log depth over [d_low, d_max]."""
    if not 0 < d_low < d_max:
        raise ConfigError(f"log bins need 0 < d_low < d_max, got ({d_low}, {d_max})")
    edges = np.exp(np.linspace(np.log(d_low), np.log(d_max), n_bins + 1))
    gaps = np.diff(edges)
    return gaps / gaps.sum()


class BinStrategy(Module):
    """Produces per-image normalized bin widths [B, N] for one of :data:`KINDS`.

    ``d_low`` is the lower edge for log bins; by default ``max(d_min, 1e-3 * d_max)``.
    The ``train_fix`` kind owns N raw scalars ``theta`` (init 0) and uses
    ``exp(theta)`` as the nonnegative scores fed to the width normalization,
    so training starts from uniform widths.
    """

    def __init__(self, kind: str, n_bins: int, d_min: float, d_max: float, d_low: Optional[float] = None):
        if kind not in KINDS:
            raise ConfigError(f"unknown bins.kind {kind!r}; expected one of {KINDS}")
        if n_bins < 2:
            raise ConfigError("n_bins must be ≥ 2")
        self.kind = kind
        self.n_bins = n_bins
        self.d_min = d_min
        self.d_max = d_max
        self.d_low = d_low if d_low is not None else max(d_min, 1e-3 * d_max)
        if kind == "train_fix":
            self.theta = Parameter(np.zeros(n_bins, dtype=get_default_dtype()))
        self._fixed = None
        if kind == "uniform_fix":
            self._fixed = uniform_widths(n_bins)
        elif kind == "log_fix":
            self._fixed = log_widths(n_bins, self.d_low, d_max)

    def widths(self, batch_size: int, context: Optional[Tensor] = None) -> Tensor:
        if self.kind == "adaptive":
            if context is None:
                raise UsageError("adaptive bins need the mini-ViT raw width scores as context")
            return normalize_widths(context)
        if self._fixed is not None:
            return Tensor(np.broadcast_to(self._fixed, (batch_size, self.n_bins)).copy())
        scores = ops.exp(self.theta).reshape(1, self.n_bins)
        ones = Tensor(np.ones((batch_size, 1), dtype=self.theta.dtype))
        return normalize_widths(ones * scores)


def widths_for(strategy: BinStrategy, image_context: Optional[Tensor] = None, batch_size: Optional[int] = None) -> Tensor:
    if batch_size is None:
        if image_context is None:
            raise UsageError("batch_size is required when no image context is given")
        batch_size = image_context.shape[0]
    return strategy.widths(batch_size, image_context)
