"""AdamW with decoupled weight decay and the one-cycle learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteGradientError, UsageError


@dataclass
class LRSchedule:
    total_steps: int
    max_lr: float = 3.5e-4
    warmup_fraction: float = 0.3
    start_div: float = 25.0
    end_div: float = 75.0

    @property
    def warmup_steps(self) -> float:
        return self.warmup_fraction * self.total_steps


def lr_at(step: float, schedule: LRSchedule) -> float:
    """Linear warm-up from max_lr/start_div to max_lr, then cosine down to max_lr/end_div."""
    if not 0 <= step <= schedule.total_steps:
        raise UsageError(f"step {step} outside [0, {schedule.total_steps}]")
    top = schedule.max_lr
    start = top / schedule.start_div
    end = top / schedule.end_div
    warm = schedule.warmup_steps
    if step <= warm:
        return start + (top - start) * (step / warm)
    t = (step - warm) / (schedule.total_steps - warm)
    return end + (top - end) * (1.0 + math.cos(math.pi * t)) / 2.0


@dataclass
class OptimizerState:
    weight_decay: float = 1e-2
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(named_params, state: OptimizerState, lr: float) -> None:
    """One decoupled-weight-decay Adam update, in place.

    Parameters without a gradient are skipped. Raises NonFiniteGradientError
    before touching anything if any gradient is NaN or inf.
    """
    named_params = [(n, p) for n, p in named_params if p.grad is not None]
    for name, p in named_params:
        if p.grad.shape != p.shape:
            raise UsageError(f"{name}: gradient shape {p.grad.shape} != {p.shape}")
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradientError(name)
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in named_params:
        g = p.grad.astype(p.dtype, copy=False)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        p.data *= 1.0 - lr * state.weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= (lr / c1) * m / (np.sqrt(v / c2) + state.eps)
