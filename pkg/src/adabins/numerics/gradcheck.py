"""Central finite-difference gradient checking (float64)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, record_branches


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    n_checked: int
    tolerance: float
    n_skipped: int = 0  # probes that straddled a kink and were redrawn

    @property
    def passed(self) -> bool:
        return self.n_checked > 0 and self.max_rel_error < self.tolerance


def relative_error(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numerical_grad(fn: Callable[[], float], tensor: Tensor, step: float = 1e-5, indices=None) -> np.ndarray:
    """Central differences of the scalar ``fn()`` w.r.t. entries of ``tensor``.

    ``tensor.data`` is perturbed in place and restored. When ``indices`` is
    given (flat indices), only those entries are estimated; others stay 0.
    """
    grad = np.zeros(tensor.size, dtype=np.float64)
    idx = range(tensor.size) if indices is None else indices
    for i in idx:
        fp, fm = _probe(fn, tensor, i, step)
        grad[i] = (fp - fm) / (2.0 * step)
    return grad.reshape(tensor.shape)


def _probe(fn, tensor: Tensor, i: int, step: float):
    flat = tensor.data.reshape(-1)
    orig = flat[i]
    try:
        flat[i] = orig + step
        fp = fn()
        flat[i] = orig - step
        fm = fn()
    finally:
        flat[i] = orig
    return fp, fm


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[tuple[str, Tensor]],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    floor: float = 1e-8,
) -> list[GradCheckResult]:
    """Compare reverse-mode gradients to central differences.

    ``loss_fn`` rebuilds the graph on each call and returns a scalar Tensor.
    With ``max_entries`` set, a random subset of that many entries per tensor
    is checked (every tensor is always covered).

    A probe whose two evaluations make different piecewise choices (an
    activation changing sign, a nearest neighbour switching) than the
    unperturbed point straddles a point where the loss is not differentiable.
    Such probes are not comparisons of gradients and are redrawn; the count
    is reported as ``n_skipped``.
    """
    for _, t in tensors:
        if t.dtype != np.float64:
            raise TypeError("gradient checks must run in float64")
        t.grad = None
    with record_branches() as base:
        loss = loss_fn()
    loss.backward()
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for name, t in tensors}

    def scalar() -> tuple[float, list]:
        with record_branches() as log:
            value = float(loss_fn().data)
        return value, log

    rng = rng or np.random.default_rng(0)
    results = []
    for name, t in tensors:
        order = rng.permutation(t.size) if max_entries is not None and t.size > max_entries else np.arange(t.size)
        want = t.size if max_entries is None else min(max_entries, t.size)
        ana_flat = analytic[name].reshape(-1)
        errors, skipped = [], 0
        for i in order:
            if len(errors) == want:
                break
            (fp, log_p), (fm, log_m) = _probe(scalar, t, int(i), step)
            if log_p != base or log_m != base:
                skipped += 1
                continue
            num = (fp - fm) / (2.0 * step)
            errors.append(float(relative_error(ana_flat[i], num, floor)))
        results.append(GradCheckResult(name, max(errors, default=0.0), len(errors), tolerance, skipped))
    return results
