"""The adaptive-bins head: mini-ViT, bin widths/centers, range attention, regression."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import ops
from .numerics.nn import Conv2d, LayerNorm, Linear, Module
from .numerics.tensor import Parameter, Tensor, as_tensor

WIDTH_EPS = 1e-3
MLP_SLOPE = 0.01


@dataclass
class MiniViTConfig:
    """Mini-ViT hyperparameters. Defaults are desk-scale; the published model
    uses patch_size=16, embed_dim=128, layers=4, heads=4, kernel_count=128,
    mlp_hidden=1024 (see :meth:`published`)."""

    patch_size: int = 2
    embed_dim: int = 32
    layers: int = 2
    heads: int = 4
    kernel_count: int = 32
    mlp_hidden: int = 128
    n_bins: int = 64
    head_hidden: int = 256

    @classmethod
    def published(cls, n_bins: int = 256) -> "MiniViTConfig":
        return cls(patch_size=16, embed_dim=128, layers=4, heads=4, kernel_count=128, mlp_hidden=1024, n_bins=n_bins)

    def validate(self) -> None:
        if self.embed_dim % self.heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.n_bins < 2:
            raise ConfigError("n_bins must be ≥ 2")
        if self.patch_size < 1 or self.kernel_count < 1:
            raise ConfigError("patch_size and kernel_count must be ≥ 1")

    def sequence_length(self, h: int, w: int) -> int:
        p = self.patch_size
        if h % p or w % p:
            raise ConfigError(f"patch size {p} does not divide feature map {h}x{w}")
        return (h // p) * (w // p)


# ---------------------------------------------------------------------------
# bins


def normalize_widths(raw: Tensor, eps: float = WIDTH_EPS) -> Tensor:
    """b_i = (b'_i + eps) / sum_j (b'_j + eps) along the last axis.

    Computed in float64 whatever the input precision: with large score ratios
    the smallest widths fall below float32 resolution relative to the range,
    and neighbouring centers would collide.
    """
    shifted = ops.cast(raw, np.float64) + eps
    return shifted / shifted.sum(axis=-1, keepdims=True)


def bin_centers(widths: Tensor, d_min: float, d_max: float) -> Tensor:
    """Centers of consecutive bins of normalized ``widths`` spanning (d_min, d_max), in float64."""
    if not 0 <= d_min < d_max:
        raise ConfigError(f"need 0 ≤ d_min < d_max, got ({d_min}, {d_max})")
    widths = ops.cast(widths, np.float64)
    edges_right = ops.cumsum(widths, axis=-1)
    # b_i / 2 + sum_{j<i} b_j  ==  cumsum_i - b_i / 2
    return d_min + (d_max - d_min) * (edges_right - 0.5 * widths)


def hybrid_regress(logits: Tensor, centers: Tensor) -> Tensor:
    """Softmax over the bin axis (1) then the center-weighted sum per pixel.

    logits: [B, N, h, w]; centers: [B, N]. Returns [B, 1, h, w].
    """
    probs = ops.softmax(logits, axis=1)
    centers = ops.cast(centers, probs.dtype)
    B, N = centers.shape
    return (probs * centers.reshape(B, N, 1, 1)).sum(axis=1, keepdims=True)


def argmax_regress(logits, centers) -> np.ndarray:
    """Center of the most likely bin per pixel (no gradient). Returns [B, 1, h, w]."""
    logits = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    centers = centers.data if isinstance(centers, Tensor) else np.asarray(centers)
    k = logits.argmax(axis=1)  # [B, h, w]
    out = np.take_along_axis(centers[:, :, None, None], k[:, None], axis=1)
    return out


# ---------------------------------------------------------------------------
# mini-ViT


class PatchEmbedding(Module):
    """p x p stride-p conv to E channels, flattened to [B, S, E], plus learned positions."""

    def __init__(self, rng, in_channels: int, cfg: MiniViTConfig, seq_len: int):
        self.cfg = cfg
        self.conv = Conv2d(rng, in_channels, cfg.embed_dim, cfg.patch_size, stride=cfg.patch_size, zero_bias=True)
        self.pos = Parameter(rng.uniform(0.0, 1.0, size=(seq_len, cfg.embed_dim)).astype(self.conv.weight.dtype))

    def forward(self, x_d: Tensor) -> Tensor:
        B, _, h, w = x_d.shape
        S = self.cfg.sequence_length(h, w)
        if S != self.pos.shape[0]:
            raise ConfigError(f"sequence length {S} does not match positional encodings ({self.pos.shape[0]})")
        e = self.conv(x_d)  # [B, E, h/p, w/p]
        e = e.reshape(B, self.cfg.embed_dim, S).transpose(0, 2, 1)
        return e + self.pos


class SelfAttention(Module):
    def __init__(self, rng, dim: int, heads: int):
        self.heads = heads
        self.qkv = Linear(rng, dim, 3 * dim)
        self.proj = Linear(rng, dim, dim)

    def forward(self, x: Tensor) -> Tensor:
        B, S, E = x.shape
        H = self.heads
        D = E // H
        qkv = self.qkv(x).reshape(B, S, 3, H, D).transpose(2, 0, 3, 1, 4)  # [3, B, H, S, D]
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = ops.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(D))
        att = ops.softmax(scores, axis=-1)
        out = ops.matmul(att, v).transpose(0, 2, 1, 3).reshape(B, S, E)
        return self.proj(out)


class EncoderLayer(Module):
    """Pre-norm block: x + MHSA(LN(x)), then x + MLP(LN(x)) with GELU."""

    def __init__(self, rng, dim: int, heads: int, hidden: int):
        self.norm1 = LayerNorm(dim)
        self.attn = SelfAttention(rng, dim, heads)
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(rng, dim, hidden)
        self.fc2 = Linear(rng, hidden, dim)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.fc2(ops.gelu(self.fc1(self.norm2(x))))


class TransformerEncoder(Module):
    def __init__(self, rng, cfg: MiniViTConfig):
        self.cfg = cfg
        self.layers = [EncoderLayer(rng, cfg.embed_dim, cfg.heads, cfg.mlp_hidden) for _ in range(cfg.layers)]

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] < self.cfg.kernel_count + 1:
            raise ConfigError(
                f"sequence length {x.shape[1]} < kernel_count + 1 = {self.cfg.kernel_count + 1}"
            )
        for layer in self.layers:
            x = layer(x)
        return x


class BinWidthsMLP(Module):
    """E -> hidden -> hidden -> N with LeakyReLU(0.01), LeakyReLU(0.01), ReLU."""

    def __init__(self, rng, cfg: MiniViTConfig):
        self.fc1 = Linear(rng, cfg.embed_dim, cfg.head_hidden)
        self.fc2 = Linear(rng, cfg.head_hidden, cfg.head_hidden)
        self.fc3 = Linear(rng, cfg.head_hidden, cfg.n_bins)

    def forward(self, first: Tensor) -> Tensor:
        x = ops.leaky_relu(self.fc1(first), MLP_SLOPE)
        x = ops.leaky_relu(self.fc2(x), MLP_SLOPE)
        return ops.relu(self.fc3(x))


def range_attention(keys: Tensor, queries: Tensor) -> Tensor:
    """Dot products between per-pixel keys [B, E, h, w] and queries [B, C, E] -> [B, C, h, w].

    Equivalent to convolving ``keys`` with each query used as a 1x1 kernel.
    """
    B, E, h, w = keys.shape
    C = queries.shape[1]
    r = ops.matmul(queries, keys.reshape(B, E, h * w))
    return r.reshape(B, C, h, w)


class MiniViT(Module):
    """Produces raw bin-width scores b' (first embedding) and range-attention maps R."""

    def __init__(self, rng, in_channels: int, feature_size: tuple[int, int], cfg: MiniViTConfig):
        cfg.validate()
        self.cfg = cfg
        S = cfg.sequence_length(*feature_size)
        if S < cfg.kernel_count + 1:
            raise ConfigError(f"sequence length {S} < kernel_count + 1 = {cfg.kernel_count + 1}")
        self.embed = PatchEmbedding(rng, in_channels, cfg, S)
        self.encoder = TransformerEncoder(rng, cfg)
        self.key_conv = Conv2d(rng, in_channels, cfg.embed_dim, 3, padding=1)
        self.widths_mlp = BinWidthsMLP(rng, cfg)

    def forward(self, x_d: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Return (raw widths b' [B,N], range-attention maps [B,C,h,w], output embeddings)."""
        x_o = self.encoder(self.embed(x_d))
        raw = self.widths_mlp(x_o[:, 0, :])
        queries = x_o[:, 1 : self.cfg.kernel_count + 1, :]
        R = range_attention(self.key_conv(x_d), queries)
        return raw, R, x_o


class AdaBinsHead(Module):
    """Mini-ViT plus the 1x1 conv that turns range-attention maps into bin logits."""

    def __init__(self, rng, in_channels: int, feature_size: tuple[int, int], cfg: MiniViTConfig):
        self.cfg = cfg
        self.vit = MiniViT(rng, in_channels, feature_size, cfg)
        self.logits_conv = Conv2d(rng, cfg.kernel_count, cfg.n_bins, 1, zero_bias=True)

    def forward(self, x_d: Tensor) -> tuple[Tensor, Tensor]:
        """Return (raw widths b' [B,N], bin logits [B,N,h,w])."""
        raw, R, _ = self.vit(x_d)
        return raw, self.logits_conv(R)


__all__ = [
    "AdaBinsHead",
    "BinWidthsMLP",
    "MiniViT",
    "MiniViTConfig",
    "PatchEmbedding",
    "TransformerEncoder",
    "argmax_regress",
    "bin_centers",
    "hybrid_regress",
    "normalize_widths",
    "range_attention",
]
