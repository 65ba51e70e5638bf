"""Multi-scale 2-D feature extraction and the coarse-to-fine merge path.

A small stack of strided conv blocks produces features at 1/4, 1/8, 1/16 and
1/32 of the input resolution; a second pass walks back up, upsampling each
coarser map and merging it with the skip connection below it.  The merged
features at every scale are what the matching stages consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import ConfigError, ShapeError


@dataclass
class BackboneConfig:
    stem_channels: int = 16
    channels: tuple[int, int, int, int] = (32, 48, 64, 96)
    blocks_per_stage: int = 1
    leaky_slope: float = 0.2
    seed: int = 0

    def validate(self) -> "BackboneConfig":
        if self.stem_channels < 1:
            raise ConfigError(f"backbone.stem_channels must be >= 1, got {self.stem_channels}")
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) != 4:
            raise ConfigError(
                f"backbone.channels needs one count per scale 1/4..1/32 (4 values), "
                f"got {self.channels}"
            )
        if any(c < 1 for c in self.channels):
            raise ConfigError(f"backbone.channels must all be >= 1, got {self.channels}")
        if self.blocks_per_stage < 1:
            raise ConfigError(f"backbone.blocks_per_stage must be >= 1, got {self.blocks_per_stage}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"backbone.leaky_slope must be in (0,1), got {self.leaky_slope}")
        if self.seed < 0:
            raise ConfigError(f"backbone.seed must be unsigned, got {self.seed}")
        return self


@dataclass
class FeaturePyramid:
    """Per-scale feature maps; fN sits at 1/N of the input resolution."""

    f4: Tensor
    f8: Tensor
    f16: Tensor
    f32: Tensor

    def as_tuple(self) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return (self.f4, self.f8, self.f16, self.f32)


class _Block(nn.Module):
    """conv3x3 + BatchNorm + leaky ReLU, with a residual add when the input
    and output shapes agree (stride 1, equal channels)."""

    def __init__(self, in_ch, out_ch, rng, stride, slope, pad_mode):
        super().__init__()
        self.body = nn.ConvBnLeaky2d(in_ch, out_ch, 3, rng, stride=stride,
                                     slope=slope, pad_mode=pad_mode)
        self.residual = stride == 1 and in_ch == out_ch

    def forward(self, x):
        y = self.body(x)
        return ad.add(x, y) if self.residual else y


class Backbone(nn.Module):
    """Stem (stride 2) plus four stages whose first block strides by 2,
    yielding features at 1/4, 1/8, 1/16, 1/32 resolution."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator | None = None,
                 pad_mode: str = "zeros"):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        slope = cfg.leaky_slope
        self.stem = nn.ConvBnLeaky2d(3, cfg.stem_channels, 3, rng, stride=2,
                                     slope=slope, pad_mode=pad_mode)
        stages = nn.ModuleList()
        in_ch = cfg.stem_channels
        for out_ch in cfg.channels:
            blocks = [_Block(in_ch, out_ch, rng, 2, slope, pad_mode)]
            for _ in range(cfg.blocks_per_stage - 1):
                blocks.append(_Block(out_ch, out_ch, rng, 1, slope, pad_mode))
            stages.append(nn.Sequential(*blocks))
            in_ch = out_ch
        self.stages = stages

    def forward(self, image: Tensor) -> FeaturePyramid:
        if image.ndim != 4 or image.shape[1] != 3:
            raise ShapeError(f"backbone expects [B,3,H,W] images, got {image.shape}")
        height, width = image.shape[2], image.shape[3]
        for axis, extent in ((2, height), (3, width)):
            if extent < 32 or extent % 32 != 0:
                raise ShapeError(
                    f"image axis {axis} has extent {extent}; extents must be "
                    f"multiples of 32 (and >= 32) so every pyramid level is integral"
                )
        x = self.stem(image)
        maps = []
        for stage in self.stages:
            x = stage(x)
            maps.append(x)
        return FeaturePyramid(*maps)


class MergeUpsample(nn.Module):
    """Walk the pyramid coarse-to-fine: transposed conv (k=4, s=2) on the
    coarser map, concatenate the skip, merge with a 3x3 conv.  Every scale's
    output passes through at least one conv of this module, so zeroed merge
    parameters produce an all-zero refined pyramid."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        c4, c8, c16, c32 = cfg.channels
        slope = cfg.leaky_slope
        self.top = nn.ConvBnLeaky2d(c32, c32, 3, rng, slope=slope)
        self.up16 = nn.ConvTranspose2d(c32, c16, 4, rng, stride=2, padding=1)
        self.merge16 = nn.ConvBnLeaky2d(2 * c16, c16, 3, rng, slope=slope)
        self.up8 = nn.ConvTranspose2d(c16, c8, 4, rng, stride=2, padding=1)
        self.merge8 = nn.ConvBnLeaky2d(2 * c8, c8, 3, rng, slope=slope)
        self.up4 = nn.ConvTranspose2d(c8, c4, 4, rng, stride=2, padding=1)
        self.merge4 = nn.ConvBnLeaky2d(2 * c4, c4, 3, rng, slope=slope)

    def forward(self, pyr: FeaturePyramid) -> FeaturePyramid:
        f32 = self.top(pyr.f32)
        f16 = self.merge16(ad.concat([self.up16(f32), pyr.f16], axis=1))
        f8 = self.merge8(ad.concat([self.up8(f16), pyr.f8], axis=1))
        f4 = self.merge4(ad.concat([self.up4(f8), pyr.f4], axis=1))
        return FeaturePyramid(f4, f8, f16, f32)
