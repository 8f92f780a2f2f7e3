"""Depth evaluation metrics, the evaluation protocol, normals and bin histograms."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .numerics.ops import interpolation_matrix

METRIC_NAMES = ("delta1", "delta2", "delta3", "rel", "rms", "log10", "sq_rel", "rmse_log")


@dataclass
class MetricReport:
    delta1: float
    delta2: float
    delta3: float
    rel: float
    rms: float
    log10: float
    sq_rel: float
    rmse_log: float
    n_pixels: int

    def as_dict(self) -> dict:
        return asdict(self)

    def to_key_values(self, prefix: str = "") -> str:
        return "\n".join(f"{prefix}{f.name}={getattr(self, f.name)!r}" for f in fields(self))

    def to_table(self) -> str:
        names = [f.name for f in fields(self)]
        widths = [max(len(n), 10) for n in names]
        head = "  ".join(n.rjust(w) for n, w in zip(names, widths))
        vals = []
        for n, w in zip(names, widths):
            v = getattr(self, n)
            vals.append((str(v) if isinstance(v, int) else f"{v:.4f}").rjust(w))
        return head + "\n" + "  ".join(vals)

    @classmethod
    def mean(cls, reports: Sequence["MetricReport"]) -> "MetricReport":
        if not reports:
            raise DomainError("no reports to average")
        vals = {n: float(np.mean([getattr(r, n) for r in reports])) for n in METRIC_NAMES}
        return cls(**vals, n_pixels=int(sum(r.n_pixels for r in reports)))


def compute_metrics(pred, gt, mask=None) -> MetricReport:
    """Standard depth metrics over masked pixels. ``gt`` is y, ``pred`` is y-hat."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DomainError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    if mask is None:
        mask = np.isfinite(gt) & (gt > 0)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DomainError("empty mask")
    y = gt[mask]
    yh = pred[mask]
    if np.any(y <= 0) or np.any(yh <= 0):
        raise DomainError("metrics need positive depths under the mask")
    ratio = np.maximum(y / yh, yh / y)
    diff = y - yh
    log_diff = np.log(y) - np.log(yh)
    return MetricReport(
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        rel=float(np.mean(np.abs(diff) / y)),
        rms=float(np.sqrt(np.mean(diff**2))),
        log10=float(np.mean(np.abs(np.log10(y) - np.log10(yh)))),
        sq_rel=float(np.mean(diff**2 / y)),
        rmse_log=float(np.sqrt(np.mean(log_diff**2))),
        n_pixels=int(mask.sum()),
    )


# ---------------------------------------------------------------------------
# evaluation protocol


@dataclass
class EvalProtocol:
    """crop is (row0, row1, col0, col1) in pixels; crop_frac the same as fractions of H, W."""

    crop: Optional[tuple[int, int, int, int]] = None
    crop_frac: Optional[tuple[float, float, float, float]] = None
    mirror_average: bool = True
    clamp_range: Optional[tuple[float, float]] = None

    def crop_mask(self, shape: tuple[int, int]) -> np.ndarray:
        H, W = shape
        out = np.zeros((H, W), dtype=bool)
        if self.crop is None and self.crop_frac is None:
            out[:] = True
            return out
        if self.crop is not None:
            r0, r1, c0, c1 = self.crop
        else:
            f = self.crop_frac
            r0, r1, c0, c1 = int(f[0] * H), int(f[1] * H), int(f[2] * W), int(f[3] * W)
        if not (0 <= r0 < r1 <= H and 0 <= c0 < c1 <= W):
            raise ConfigError(f"crop {(r0, r1, c0, c1)} outside image {H}x{W}")
        out[r0:r1, c0:c1] = True
        return out


def upsample_to(depth: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear (half-pixel) upsampling of [..., h, w] to an integer multiple ``shape``."""
    h, w = depth.shape[-2:]
    H, W = shape
    if (H, W) == (h, w):
        return depth
    if H % h or W % w or H // h != W // w:
        raise ConfigError(f"cannot upsample {h}x{w} to {H}x{W} by one integer factor")
    f = H // h
    return interpolation_matrix(h, f) @ depth @ interpolation_matrix(w, f).T


def predict_depth(model, images: np.ndarray, mirror_average: bool) -> np.ndarray:
    """Model depth [B, H, W]; optionally averaged with the flipped prediction of the flipped input."""
    images = np.asarray(images, dtype=getattr(model, "dtype", np.float32))
    depth = model.forward(images)[0].data[:, 0]
    if mirror_average:
        flipped = model.forward(np.ascontiguousarray(images[..., ::-1]))[0].data[:, 0]
        depth = 0.5 * (depth + flipped[..., ::-1])
    return depth


def evaluate(model, samples, protocol: Optional[EvalProtocol] = None, batch_size: int = 8) -> MetricReport:
    """Mean over images of per-image metrics on ``samples`` (SceneSample-like objects)."""
    protocol = protocol or EvalProtocol()
    lo, hi = protocol.clamp_range or (model.d_min, model.d_max)
    reports = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        images = np.stack([s.image for s in chunk])
        preds = predict_depth(model, images, protocol.mirror_average)
        for s, pred in zip(chunk, preds):
            pred = np.clip(upsample_to(pred, s.depth.shape), lo, hi)
            mask = s.mask & protocol.crop_mask(s.depth.shape)
            reports.append(compute_metrics(pred, s.depth, mask))
    return MetricReport.mean(reports)


# ---------------------------------------------------------------------------
# normals and histograms


def normals_from_depth(depth: np.ndarray) -> np.ndarray:
    """Unit normals (h, w, 3) proportional to (-dd/dx, -dd/dy, 1).

    Gradients use central differences inside and one-sided differences at borders.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise DomainError("normals_from_depth expects a 2-D depth map")
    ddy, ddx = np.gradient(depth)
    n = np.stack([-ddx, -ddy, np.ones_like(depth)], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


@dataclass
class HistogramPair:
    bin_centers: np.ndarray
    gt_freq: np.ndarray
    center_freq: np.ndarray

    def write(self, gt_path, centers_path) -> None:
        for path, freq in ((gt_path, self.gt_freq), (centers_path, self.center_freq)):
            lines = [f"{float(c)!r} {float(f)!r}" for c, f in zip(self.bin_centers, freq)]
            Path(path).write_text("# bin_center frequency\n" + "\n".join(lines) + "\n")


def bin_histogram_export(centers, gt, mask, d_min: float, d_max: float, n_hist_bins: int = 50) -> HistogramPair:
    """Normalized histograms over (d_min, d_max) of GT depths and predicted bin centers."""
    edges = np.linspace(d_min, d_max, n_hist_bins + 1)
    gt_vals = np.asarray(gt, dtype=np.float64)[np.asarray(mask, dtype=bool)]
    if gt_vals.size == 0:
        raise DomainError("no valid GT depths for the histogram")
    c = np.asarray(centers, dtype=np.float64).reshape(-1)
    gt_hist = np.histogram(gt_vals, edges)[0].astype(np.float64)
    c_hist = np.histogram(c, edges)[0].astype(np.float64)
    return HistogramPair(0.5 * (edges[:-1] + edges[1:]), gt_hist / gt_hist.sum(), c_hist / c_hist.sum())


def total_variation(depth: np.ndarray) -> float:
    """Mean absolute difference between horizontally and vertically adjacent pixels."""
    depth = np.asarray(depth, dtype=np.float64)
    dx = np.abs(np.diff(depth, axis=-1))
    dy = np.abs(np.diff(depth, axis=-2))
    return float((dx.sum() + dy.sum()) / (dx.size + dy.size))
