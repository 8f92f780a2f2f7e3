"""Training losses: scale-invariant log loss, Chamfer bin-center loss, L1/SSIM."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError
from .numerics import ops
from .numerics.tensor import Tensor, as_tensor, note_branch

LOSS_KINDS = ("si", "si+bins", "l1ssim")


@dataclass
class LossConfig:
    lam: float = 0.85
    alpha: float = 10.0
    beta: float = 0.1
    chamfer_sample_cap: int = 1024
    kind: str = "si+bins"

    def validate(self) -> None:
        if not 0 <= self.lam <= 1:
            raise ConfigError("loss.lambda must lie in [0, 1]")
        if self.alpha <= 0 or self.beta < 0:
            raise ConfigError("need loss.alpha > 0 and loss.beta ≥ 0")
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss.kind {self.kind!r}; expected one of {LOSS_KINDS}")


def valid_mask(gt: np.ndarray, d_min: float, d_max: float) -> np.ndarray:
    """Pixels with finite ground truth strictly inside (d_min, d_max)."""
    gt = np.asarray(gt)
    with np.errstate(invalid="ignore"):
        return np.isfinite(gt) & (gt > d_min) & (gt < d_max)


def _check_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DomainError("no valid ground-truth pixels (T = 0)")
    return mask


def si_loss(pred, gt, mask, cfg: Optional[LossConfig] = None) -> Tensor:
    """alpha * sqrt(mean(g^2) - lambda * mean(g)^2) with g = ln(pred) - ln(gt) over masked pixels.

    All masked pixels of the batch are pooled into one set of size T.
    """
    cfg = cfg or LossConfig()
    pred = as_tensor(pred)
    mask = _check_mask(mask)
    gt_valid = np.asarray(gt)[mask].astype(pred.dtype)
    pred_valid = pred[mask]
    if np.any(gt_valid <= 0) or np.any(pred_valid.data <= 0):
        raise DomainError("scale-invariant loss needs positive depths under the mask")
    g = ops.log(pred_valid) - np.log(gt_valid)
    T = g.shape[0]
    mean_g = g.sum() * (1.0 / T)
    d = (g * g).sum() * (1.0 / T) - cfg.lam * (mean_g * mean_g)
    if d.data <= 0:
        # zero or roundoff-negative variance: the loss is 0 and sqrt'(0) is undefined
        return ops.mul(d, 0.0)
    return cfg.alpha * ops.sqrt(d)


def sample_valid_depths(gt: np.ndarray, mask: np.ndarray, cap: int, seed) -> np.ndarray:
    """Up to ``cap`` valid depths drawn uniformly without replacement."""
    values = np.asarray(gt)[np.asarray(mask, dtype=bool)]
    if values.size == 0:
        raise DomainError("no valid ground-truth depths for the Chamfer loss")
    if values.size <= cap:
        return values
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(values.size, size=cap, replace=False))
    return values[idx]


def chamfer_1d(points: np.ndarray, centers: Tensor) -> Tensor:
    """Bidirectional Chamfer distance between constant ``points`` [M] and ``centers`` [N].

    chamfer(A, B) = mean over a of min over b of (a - b)^2, summed both ways.
    The nearest-neighbour assignment is fixed at forward time.
    """
    centers = as_tensor(centers)
    points = np.asarray(points, dtype=centers.dtype)
    diff = points[:, None] - centers.data[None, :]  # [M, N]
    sq = diff * diff
    nearest_center = sq.argmin(axis=1)
    nearest_point = sq.argmin(axis=0)
    note_branch(nearest_center)
    note_branch(nearest_point)
    to_centers = points - centers[nearest_center]
    to_points = centers - points[nearest_point]
    return (to_centers * to_centers).mean() + (to_points * to_points).mean()


def chamfer_bins_loss(centers, gt, mask, cfg: Optional[LossConfig] = None, seed=0) -> Tensor:
    """Mean over images of the Chamfer distance between bin centers and GT depths.

    ``centers`` is [B, N]; ``gt``/``mask`` are [B, ...]. ``seed`` may be an int
    or a per-image sequence of seeds for the GT subsample.
    """
    cfg = cfg or LossConfig()
    centers = as_tensor(centers)
    gt = np.asarray(gt)
    mask = np.asarray(mask, dtype=bool)
    B = centers.shape[0]
    seeds = list(seed) if isinstance(seed, (list, tuple)) else [(seed, i) for i in range(B)]
    total = None
    for i in range(B):
        s = seeds[i]
        X = sample_valid_depths(gt[i], mask[i], cfg.chamfer_sample_cap, list(np.atleast_1d(s)))
        term = chamfer_1d(X, centers[i])
        total = term if total is None else total + term
    return total * (1.0 / B)


def total_loss(pred, gt, mask, centers, cfg: Optional[LossConfig] = None, seed=0) -> tuple[Tensor, dict]:
    """L_pixel + beta * L_bins. Returns the loss and a dict of float components."""
    cfg = cfg or LossConfig()
    pixel = si_loss(pred, gt, mask, cfg)
    parts = {"pixel": float(pixel.data)}
    if cfg.beta == 0 or centers is None:
        parts["bins"] = 0.0
        return pixel, parts
    bins = chamfer_bins_loss(centers, gt, mask, cfg, seed)
    parts["bins"] = float(bins.data)
    return pixel + cfg.beta * bins, parts


# ---------------------------------------------------------------------------
# L1 + SSIM (loss-choice ablation)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_map(x: Tensor, y: Tensor, data_range: float, window: np.ndarray) -> Tensor:
    """SSIM per valid window position of [B, 1, H, W] inputs (no padding)."""
    k = Tensor(window[None, None].astype(x.dtype))
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_x = ops.conv2d(x, k)
    mu_y = ops.conv2d(y, k)
    sxx = ops.conv2d(x * x, k) - mu_x * mu_x
    syy = ops.conv2d(y * y, k) - mu_y * mu_y
    sxy = ops.conv2d(x * y, k) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return num / den


def l1_ssim_loss(pred, gt, mask, weight: float = 0.85, data_range: float = 10.0, window_size: int = 11) -> Tensor:
    """weight * (1 - SSIM) / 2 + (1 - weight) * L1.

    L1 averages |pred - gt| over masked pixels. For SSIM, invalid pixels of
    both maps are zeroed and the SSIM map is averaged over window positions
    whose center pixel is valid.
    """
    pred = as_tensor(pred)
    mask = _check_mask(mask)
    gt = np.where(mask, np.nan_to_num(np.asarray(gt, dtype=pred.dtype)), 0).astype(pred.dtype)
    mfloat = mask.astype(pred.dtype)
    l1 = ops.abs(pred[mask] - gt[mask]).mean()
    window = gaussian_window(window_size)
    smap = ssim_map(pred * mfloat, Tensor(gt), data_range, window)
    r = window_size // 2
    center_valid = mask[..., r : mask.shape[-2] - r, r : mask.shape[-1] - r]
    if not center_valid.any():
        raise DomainError("no valid SSIM window centers")
    ssim = smap[center_valid].mean()
    return weight * (1.0 - ssim) * 0.5 + (1.0 - weight) * l1
