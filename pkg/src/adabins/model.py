"""Full depth model: backbone + bin strategy + adaptive-bins head."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .backbone import Backbone, BackboneConfig
from .binning import BinStrategy
from .errors import ConfigError
from .head import AdaBinsHead, MiniViTConfig, argmax_regress, bin_centers, hybrid_regress
from .numerics import ops
from .numerics.nn import Module
from .numerics.tensor import Tensor, as_tensor

REGRESSIONS = ("hybrid", "direct")


@dataclass
class Prediction:
    depth: Tensor  # [B, 1, H, W]
    depth_half: Tensor  # [B, 1, h, w]
    widths: Optional[Tensor]  # [B, N]
    centers: Optional[Tensor]  # [B, N]
    logits: Optional[Tensor]  # [B, N, h, w]


class DepthModel(Module):
    """Encoder-decoder followed by either hybrid regression over bins or direct regression.

    ``regression="direct"`` is the no-bins baseline: the backbone emits one
    channel squashed into (d_min, d_max) with a sigmoid.
    """

    def __init__(
        self,
        backbone: BackboneConfig,
        vit: MiniViTConfig,
        d_min: float,
        d_max: float,
        bins_kind: str = "adaptive",
        regression: str = "hybrid",
        seed: int = 0,
        d_low: Optional[float] = None,
    ):
        if regression not in REGRESSIONS:
            raise ConfigError(f"unknown regression {regression!r}; expected one of {REGRESSIONS}")
        if not 0 <= d_min < d_max:
            raise ConfigError(f"need 0 ≤ d_min < d_max, got ({d_min}, {d_max})")
        rng = np.random.default_rng(seed)
        self.d_min = float(d_min)
        self.d_max = float(d_max)
        self.regression = regression
        if regression == "direct":
            backbone = BackboneConfig(backbone.stages, backbone.base_channels, 1, backbone.input_size)
        self.backbone_config = backbone
        self.vit_config = vit
        self.backbone = Backbone(backbone, rng)
        if regression == "hybrid":
            self.head = AdaBinsHead(rng, backbone.decoded_channels, backbone.feature_size, vit)
            self.bins = BinStrategy(bins_kind, vit.n_bins, d_min, d_max, d_low)
        else:
            self.head = None
            self.bins = None

    @property
    def input_size(self) -> tuple[int, int]:
        return self.backbone_config.input_size

    def predict(self, image) -> Prediction:
        image = as_tensor(image)
        x_d = self.backbone(image)
        if self.regression == "direct":
            half = self.d_min + (self.d_max - self.d_min) * ops.sigmoid(x_d)
            return Prediction(ops.bilinear_upsample(half, 2), half, None, None, None)
        raw, logits = self.head(x_d)
        widths = self.bins.widths(image.shape[0], raw if self.bins.kind == "adaptive" else None)
        centers = bin_centers(widths, self.d_min, self.d_max)
        half = hybrid_regress(logits, centers)
        return Prediction(ops.bilinear_upsample(half, 2), half, widths, centers, logits)

    @property
    def dtype(self):
        return self.backbone.stem.weight.dtype

    def forward(self, image):
        """Return (depth [B,1,H,W], widths [B,N], centers [B,N])."""
        p = self.predict(image)
        return p.depth, p.widths, p.centers

    def predict_argmax(self, image) -> np.ndarray:
        """Half-resolution depth taking the center of the most likely bin per pixel."""
        if self.regression != "hybrid":
            raise ConfigError("argmax regression needs a bins head")
        p = self.predict(image)
        return argmax_regress(p.logits, p.centers)


def adabins_forward(image, model: DepthModel):
    return model.forward(image)
