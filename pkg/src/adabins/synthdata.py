"""Seeded synthetic (image, depth) scenes: close-ups, corridors and mixtures.

Close-ups keep every depth inside a narrow band near the camera; corridors
span almost the whole range with a ramp from the bottom (near) to the top
(far) of the frame. Images are rendered from depth so appearance determines
depth.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SCENE_TYPES = ("closeup", "corridor", "mixed")


@dataclass
class CorpusConfig:
    n_samples: int = 64
    height: int = 32
    width: int = 32
    seed: int = 0
    scene_mix: tuple[float, float, float] = (0.5, 0.5, 0.0)
    invalid_fraction: float = 0.0
    d_min: float = 0.1
    d_max: float = 10.0

    def validate(self) -> None:
        if self.n_samples < 2:
            raise ConfigError("n_samples must be ≥ 2")
        if len(self.scene_mix) != 3 or min(self.scene_mix) < 0 or abs(sum(self.scene_mix) - 1) > 1e-9:
            raise ConfigError(f"scene_mix must be 3 nonnegative proportions summing to 1, got {self.scene_mix}")
        if not 0 <= self.invalid_fraction <= 0.3:
            raise ConfigError("invalid_fraction must lie in [0, 0.3]")
        if not 0 < self.d_min < self.d_max:
            raise ConfigError("need 0 < d_min < d_max")
        if self.height < 4 or self.width < 4:
            raise ConfigError("image too small")


@dataclass
class SceneSample:
    image: np.ndarray  # [3, H, W] float32 in [0, 1]
    depth: np.ndarray  # [H, W] float32, NaN where invalid
    mask: np.ndarray  # [H, W] bool
    scene_type: str
    seed: tuple = field(default=())


@dataclass
class Corpus:
    train: list
    val: list

    @property
    def samples(self) -> list:
        return self.train + self.val


def _resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    src = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    m = np.zeros((n_out, n_in))
    np.add.at(m, (np.arange(n_out), lo), 1 - (src - lo))
    np.add.at(m, (np.arange(n_out), hi), src - lo)
    return m


def _smooth_noise(rng, H, W, coarse=4) -> np.ndarray:
    g = rng.standard_normal((coarse, coarse))
    return _resize_matrix(coarse, H) @ g @ _resize_matrix(coarse, W).T


def _grid(H, W):
    y = (np.arange(H) + 0.5) / H
    x = (np.arange(W) + 0.5) / W
    return np.meshgrid(y, x, indexing="ij")


def _closeup_depth(rng, cfg: CorpusConfig, H, W) -> np.ndarray:
    R = cfg.d_max - cfg.d_min
    yy, xx = _grid(H, W)
    z0 = cfg.d_min + rng.uniform(0.08, 0.2) * R
    split = rng.uniform(0.3, 0.7)
    region = (xx if rng.random() < 0.5 else yy) < split
    depth = np.empty((H, W))
    for part in (region, ~region):
        zk = z0 + rng.uniform(-0.04, 0.04) * R
        gx, gy = rng.uniform(-0.05, 0.05, size=2) * R
        depth[part] = (zk + gx * (xx - 0.5) + gy * (yy - 0.5))[part]
    depth += 0.01 * R * _smooth_noise(rng, H, W)
    return np.clip(depth, cfg.d_min + 0.02 * R, cfg.d_min + 0.35 * R)


def _corridor_depth(rng, cfg: CorpusConfig, H, W) -> np.ndarray:
    R = cfg.d_max - cfg.d_min
    yy, xx = _grid(H, W)
    near = cfg.d_min + rng.uniform(0.01, 0.04) * R
    far = cfg.d_max - rng.uniform(0.01, 0.04) * R
    gamma = rng.uniform(1.0, 1.6)
    # top of the frame is far, bottom near; rows normalized to exactly [0, 1]
    t = (np.arange(H) / (H - 1))[:, None] * np.ones((1, W))
    depth = near + (far - near) * (1.0 - t) ** gamma
    cx = rng.uniform(0.4, 0.6)
    side = np.minimum(1.0, 2.0 * np.abs(xx - cx))
    # walls pull off-center columns towards the camera; the center column keeps the full span
    col = np.argmin(np.abs(xx[0] - cx))
    side[:, col] = 0.0
    depth = depth - (depth - near) * 0.5 * side**2
    return np.clip(depth, cfg.d_min + 0.005 * R, cfg.d_max - 0.005 * R)


def _mixed_depth(rng, cfg: CorpusConfig, H, W) -> np.ndarray:
    depth = _corridor_depth(rng, cfg, H, W)
    box = _closeup_depth(rng, cfg, H, W)
    bh, bw = int(H * rng.uniform(0.3, 0.5)), int(W * rng.uniform(0.3, 0.5))
    r0, c0 = rng.integers(0, H - bh + 1), rng.integers(0, W - bw + 1)
    depth[r0 : r0 + bh, c0 : c0 + bw] = box[r0 : r0 + bh, c0 : c0 + bw]
    return depth


def render_image(rng, depth: np.ndarray, cfg: CorpusConfig) -> np.ndarray:
    """Shade by nearness, add a perspective-scaled stripe texture and seeded noise."""
    H, W = depth.shape
    near = (cfg.d_max - depth) / (cfg.d_max - cfg.d_min)
    yy, xx = _grid(H, W)
    freq = rng.uniform(2.0, 4.0)
    stripes = 0.5 + 0.5 * np.sin(2 * np.pi * freq * xx * (1.0 + 2.0 * near) + rng.uniform(0, 2 * np.pi))
    image = np.stack(
        [
            0.1 + 0.8 * near,
            0.2 + 0.5 * near + 0.2 * stripes,
            0.5 * near + 0.3 * (0.5 + 0.15 * _smooth_noise(rng, H, W)),
        ]
    )
    image += 0.01 * rng.standard_normal(image.shape)
    return np.clip(image, 0.0, 1.0).astype(np.float32)


_GENERATORS = {"closeup": _closeup_depth, "corridor": _corridor_depth, "mixed": _mixed_depth}


def generate_scene(scene_type: str, seed, cfg: CorpusConfig) -> SceneSample:
    if scene_type not in _GENERATORS:
        raise ConfigError(f"unknown scene type {scene_type!r}")
    seed = tuple(np.atleast_1d(seed).tolist())
    rng = np.random.default_rng(list(seed))
    H, W = cfg.height, cfg.width
    depth = _GENERATORS[scene_type](rng, cfg, H, W).astype(np.float32)
    image = render_image(rng, depth, cfg)
    mask = rng.random((H, W)) >= cfg.invalid_fraction
    if not mask.any():
        mask[H // 2, W // 2] = True
    mask &= (depth > cfg.d_min) & (depth < cfg.d_max)
    depth = np.where(mask, depth, np.float32(np.nan)).astype(np.float32)
    return SceneSample(image, depth, mask, scene_type, seed)


def scene_counts(n: int, mix) -> list[int]:
    """Exact per-type counts by largest remainder."""
    raw = np.asarray(mix, dtype=np.float64) * n
    counts = np.floor(raw).astype(int)
    order = np.argsort(-(raw - counts), kind="stable")
    for k in order[: n - counts.sum()]:
        counts[k] += 1
    return counts.tolist()


def scene_schedule(n: int, mix) -> list[str]:
    """Spread the exact counts evenly along the corpus so every split sees the mix."""
    counts = scene_counts(n, mix)
    assigned = [0, 0, 0]
    out = []
    for i in range(n):
        deficit = [counts[k] * (i + 1) / n - assigned[k] if assigned[k] < counts[k] else -np.inf for k in range(3)]
        k = int(np.argmax(deficit))
        assigned[k] += 1
        out.append(SCENE_TYPES[k])
    return out


def make_corpus(cfg: CorpusConfig) -> Corpus:
    """Deterministic corpus; the last quarter (at least one sample) is validation."""
    cfg.validate()
    types = scene_schedule(cfg.n_samples, cfg.scene_mix)
    samples = [generate_scene(t, (cfg.seed, i), cfg) for i, t in enumerate(types)]
    n_val = max(1, cfg.n_samples // 4)
    return Corpus(samples[: cfg.n_samples - n_val], samples[cfg.n_samples - n_val :])
