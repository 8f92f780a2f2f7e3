"""Finite-difference gradient suite: every differentiable op, then the whole model.

All checks run in float64 with central differences. The op checks contract
each op's output against a fixed random weight so every output entry carries
gradient. The pipeline check builds a tiny model on 16x16 inputs and checks a
random subset of entries of every parameter tensor and of the input image
against the combined scale-invariant plus bin-Chamfer loss.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from ..backbone import BackboneConfig
from ..head import MiniViTConfig, bin_centers, hybrid_regress, normalize_widths, range_attention
from ..losses import LossConfig, chamfer_bins_loss, l1_ssim_loss, si_loss, total_loss
from ..model import DepthModel
from ..numerics import Parameter, Tensor, check_gradients, ops, precision
from ..numerics.gradcheck import GradCheckResult

STEP = 1e-5
TOLERANCE = 1e-4
# Gradients below this magnitude are compared in absolute terms (error below
# FLOOR * TOLERANCE = 1e-9). Central differences of an O(10) loss carry about
# 1e-10 of rounding noise at this step, which would otherwise dominate the
# relative error of gradients near 1e-7.
FLOOR = 1e-5


@dataclass
class SuiteEntry:
    name: str
    seed: int
    max_rel_error: float
    n_checked: int
    worst: str = ""
    n_skipped: int = 0
    every_tensor_checked: bool = True

    @property
    def passed(self) -> bool:
        return self.every_tensor_checked and self.max_rel_error < TOLERANCE

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        where = f" worst={self.worst}" if self.worst else ""
        return (
            f"{status} {self.name} seed={self.seed} max_rel_err={self.max_rel_error:.3e}"
            f" entries={self.n_checked} skipped_at_kinks={self.n_skipped}{where}"
        )


def _away_from_kinks(a: np.ndarray, margin: float = 1e-2) -> np.ndarray:
    a = a.copy()
    small = np.abs(a) < margin
    a[small] = np.where(a[small] < 0, -margin, margin) * 5
    return a


def _positive(a: np.ndarray) -> np.ndarray:
    return np.abs(a) + 0.5


def _op_cases(rng: np.random.Generator) -> list[tuple[str, Callable, list[np.ndarray]]]:
    n = rng.standard_normal
    depth = lambda *s: rng.uniform(0.5, 9.0, size=s)  # noqa: E731
    gt = depth(2, 1, 12, 12)
    mask = rng.random((2, 1, 12, 12)) > 0.1
    cfg = LossConfig()
    return [
        ("add_mul_sub", lambda a, b: a * b - a + b, [n((3, 4)), n((4,))]),
        ("div", lambda a, b: a / b, [n((3, 4)), _positive(n((3, 4)))]),
        ("power", lambda a: a**3, [n((5,))]),
        ("exp", ops.exp, [n((3, 4))]),
        ("log", ops.log, [_positive(n((3, 4)))]),
        ("sqrt", ops.sqrt, [_positive(n((3, 4)))]),
        ("abs", ops.abs, [_away_from_kinks(n((3, 4)))]),
        ("sigmoid", ops.sigmoid, [n((3, 4))]),
        ("relu", ops.relu, [_away_from_kinks(n((3, 4)))]),
        ("leaky_relu", lambda a: ops.leaky_relu(a, 0.01), [_away_from_kinks(n((3, 4)))]),
        ("gelu", ops.gelu, [n((3, 4))]),
        ("sum_mean", lambda a: a.sum(axis=0) * a.mean(axis=1, keepdims=True), [n((3, 4))]),
        ("reshape_transpose", lambda a: a.reshape(6, 4).transpose(1, 0), [n((2, 3, 4))]),
        ("getitem", lambda a: a[:, 1:, np.array([0, 2, 2])], [n((2, 3, 4))]),
        ("concat", lambda a, b: ops.concat([a, b], axis=1), [n((2, 3)), n((2, 2))]),
        ("cumsum", lambda a: ops.cumsum(a, axis=1), [n((2, 5))]),
        ("matmul", ops.matmul, [n((2, 3, 4)), n((4, 5))]),
        ("softmax", lambda a: ops.softmax(a, axis=1), [n((2, 5, 3))]),
        ("layer_norm", lambda a, g, b: ops.layer_norm(a, g, b), [n((3, 6)), n((6,)), n((6,))]),
        ("conv2d", lambda x, k, b: ops.conv2d(x, k, b, 1, 1), [n((2, 3, 6, 6)), n((4, 3, 3, 3)), n((4,))]),
        ("conv2d_strided", lambda x, k: ops.conv2d(x, k, None, 2, 1), [n((1, 2, 7, 6)), n((3, 2, 3, 3))]),
        ("bilinear_upsample", lambda x: ops.bilinear_upsample(x, 2), [n((2, 2, 3, 4))]),
        ("upsample_nearest", lambda x: ops.upsample_nearest(x, 2), [n((1, 2, 3, 3))]),
        ("normalize_widths", normalize_widths, [np.abs(n((2, 6)))]),
        ("bin_centers", lambda w: bin_centers(normalize_widths(w), 0.1, 10.0), [np.abs(n((2, 6)))]),
        ("hybrid_regress", hybrid_regress, [n((2, 5, 3, 3)), depth(2, 5)]),
        ("range_attention", range_attention, [n((2, 4, 3, 3)), n((2, 3, 4))]),
        ("si_loss", lambda p: si_loss(p, gt, mask, cfg), [depth(2, 1, 12, 12)]),
        ("chamfer_bins_loss", lambda c: chamfer_bins_loss(c, gt, mask, cfg, seed=0), [depth(2, 7)]),
        ("l1_ssim_loss", lambda p: l1_ssim_loss(p, gt, mask), [depth(2, 1, 12, 12)]),
    ]


def check_op(name: str, fn: Callable, arrays: Iterable[np.ndarray], seed: int) -> SuiteEntry:
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        inputs = [Parameter(np.asarray(a, dtype=np.float64)) for a in arrays]
        out = fn(*inputs)
        weight = Tensor(rng.standard_normal(out.shape)) if out.size > 1 else Tensor(1.0)
        results = check_gradients(
            lambda: (fn(*inputs) * weight).sum(),
            [(f"arg{i}", t) for i, t in enumerate(inputs)],
            step=STEP,
            tolerance=TOLERANCE,
            floor=FLOOR,
        )
    return _summarize(name, seed, results)


def op_checks(seed: int = 0) -> list[SuiteEntry]:
    rng = np.random.default_rng(seed)
    return [check_op(name, fn, arrays, seed) for name, fn, arrays in _op_cases(rng)]


def tiny_model(seed: int, size: int = 16) -> DepthModel:
    """Small float64 model on ``size`` x ``size`` inputs used by the pipeline check."""
    with precision(np.float64):
        return DepthModel(
            BackboneConfig(stages=2, base_channels=4, decoded_channels=8, input_size=(size, size)),
            MiniViTConfig(patch_size=2, embed_dim=8, layers=1, heads=2, kernel_count=4, mlp_hidden=16, n_bins=8, head_hidden=16),
            d_min=0.1,
            d_max=10.0,
            bins_kind="adaptive",
            seed=seed,
        )


def pipeline_check(seed: int, max_entries: int = 3, size: int = 16) -> SuiteEntry:
    """Backbone, adaptive-bins head and the combined loss, end to end."""
    rng = np.random.default_rng(seed)
    model = tiny_model(seed, size)
    cfg = LossConfig()
    with precision(np.float64):
        image = Parameter(rng.uniform(0.0, 1.0, size=(2, 3, size, size)))
        gt = rng.uniform(0.5, 9.0, size=(2, 1, size, size))
        mask = rng.random(gt.shape) > 0.1

        def loss_fn():
            pred, _, centers = model.forward(image)
            return total_loss(pred, gt, mask, centers, cfg, seed)[0]

        tensors = [("image", image)] + list(model.named_parameters())
        results = check_gradients(loss_fn, tensors, STEP, TOLERANCE, max_entries, rng, FLOOR)
    return _summarize("pipeline", seed, results)


def _summarize(name: str, seed: int, results: list[GradCheckResult]) -> SuiteEntry:
    worst = max(results, key=lambda r: r.max_rel_error)
    return SuiteEntry(
        name,
        seed,
        worst.max_rel_error,
        sum(r.n_checked for r in results),
        worst.name,
        sum(r.n_skipped for r in results),
        all(r.n_checked > 0 for r in results),
    )


def run_suite(seed: int = 0, pipeline_seeds: int = 10, emit: Optional[Callable[[str], None]] = None) -> list[SuiteEntry]:
    """Op checks at ``seed`` then the pipeline check at ``seed .. seed + pipeline_seeds - 1``."""
    entries = []
    for entry in op_checks(seed):
        entries.append(entry)
        if emit:
            emit(entry.line())
    for s in range(seed, seed + pipeline_seeds):
        entry = pipeline_check(s)
        entries.append(entry)
        if emit:
            emit(entry.line())
    return entries
