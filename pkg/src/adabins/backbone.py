"""Small encoder-decoder producing decoded features at half input resolution.

Encoder: a stride-1 stem followed by ``stages`` stride-2 convs, so the
bottleneck sits at ``H / 2**stages``. Decoder: nearest-neighbour upsampling,
a 3x3 conv, and an additive skip from the matching encoder level, repeated
until ``H / 2``; a final 3x3 conv maps to ``decoded_channels``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import ops
from .numerics.nn import Conv2d, Module
from .numerics.tensor import Tensor

_SLOPE = 0.01


@dataclass
class BackboneConfig:
    stages: int = 3
    base_channels: int = 16
    decoded_channels: int = 128
    input_size: tuple[int, int] = (32, 32)

    def validate(self) -> None:
        H, W = self.input_size
        div = 2 ** self.stages
        if self.stages < 1:
            raise ConfigError("backbone needs at least one downsampling stage")
        if H % div or W % div:
            raise ConfigError(f"input size {H}x{W} not divisible by 2**stages = {div}")
        if self.decoded_channels < 1 or self.base_channels < 1:
            raise ConfigError("channel counts must be ≥ 1")

    @property
    def feature_size(self) -> tuple[int, int]:
        return self.input_size[0] // 2, self.input_size[1] // 2


class Backbone(Module):
    def __init__(self, config: BackboneConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        c = config.base_channels
        widths = [c * 2**i for i in range(config.stages + 1)]
        self.stem = Conv2d(rng, 3, widths[0], 3, padding=1)
        self.down = [Conv2d(rng, widths[i], widths[i + 1], 3, stride=2, padding=1) for i in range(config.stages)]
        # up[k] goes from level stages-k to stages-k-1, stopping at level 1 (H/2)
        self.up = [Conv2d(rng, widths[i + 1], widths[i], 3, padding=1) for i in range(config.stages - 1, 0, -1)]
        self.out = Conv2d(rng, widths[1], config.decoded_channels, 3, padding=1)

    def forward(self, image: Tensor) -> Tensor:
        H, W = self.config.input_size
        if image.ndim != 4 or image.shape[1] != 3 or image.shape[2:] != (H, W):
            raise ConfigError(f"backbone expects [B,3,{H},{W}] input, got {image.shape}")
        x = ops.leaky_relu(self.stem(image), _SLOPE)
        skips = []
        for conv in self.down:
            x = ops.leaky_relu(conv(x), _SLOPE)
            skips.append(x)
        # skips[i] is at resolution H / 2**(i+1); the deepest is the bottleneck
        for k, conv in enumerate(self.up):
            skip = skips[-2 - k]
            x = ops.leaky_relu(conv(ops.upsample_nearest(x, 2)) + skip, _SLOPE)
        return self.out(x)
