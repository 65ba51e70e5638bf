"""End-to-end stereo model: features -> matching volume -> aggregation ->
disparity at quarter and full resolution."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .aggregation import CgfConfig, Decoder, Encoder
from .autodiff import Tensor
from .backbone import Backbone, BackboneConfig, MergeUpsample
from .correlation import (
    AttentionFeatureVolume,
    CorrelationLift,
    MatchingConfig,
    build_correlation,
)
from .errors import ConfigError, ShapeError
from .losses import LossWeights
from .regression import DisparityMap, SuperpixelUpsample, top2_regression


@dataclass
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    matching: MatchingConfig = field(default_factory=MatchingConfig)
    cgf: CgfConfig = field(default_factory=CgfConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    afv_enabled: bool = True
    seed: int = 0

    def validate(self) -> "ModelConfig":
        self.backbone.validate()
        self.matching.validate()
        self.cgf.validate()
        self.loss.validate()
        if self.matching.max_disparity % 32 != 0:
            raise ConfigError(
                f"max_disparity must be a multiple of 32 so the quarter-resolution "
                f"volume depth ({self.matching.max_disparity} // 4) survives three "
                f"halvings, got {self.matching.max_disparity}"
            )
        return self


class StereoModel(nn.Module):
    """Siamese feature extraction, cosine correlation, attention feature
    volume (optional), hourglass aggregation with context fusion, top-2
    regression and superpixel upsampling.

    All parameters are drawn from a single generator seeded by
    config.seed, so two models built from equal configs are bit-identical.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)
        c4, c8, c16, c32 = config.backbone.channels
        self.backbone = Backbone(config.backbone, rng)
        self.merge = MergeUpsample(config.backbone, rng)
        self.lift = CorrelationLift(config.matching, rng)
        self.afv = None
        if config.afv_enabled:
            self.afv = AttentionFeatureVolume(c4, config.matching, rng)
        self.encoder = Encoder(config.matching.corr_channels, (c8, c16, c32),
                               config.cgf, rng)
        self.decoder = Decoder(config.matching.corr_channels, (c8, c16, c32),
                               config.cgf, rng)
        self.upsampler = SuperpixelUpsample(c4, rng)

    def forward(self, left: Tensor, right: Tensor) -> tuple[DisparityMap, DisparityMap]:
        if left.shape != right.shape:
            raise ShapeError(
                f"left/right shapes differ: {left.shape} vs {right.shape}"
            )
        ctx = self.merge(self.backbone(left))
        feat_r = self.merge(self.backbone(right))
        corr = build_correlation(ctx.f4, feat_r.f4, self.config.matching)
        volume = self.lift(corr)
        if self.afv is not None:
            volume = self.afv(volume, ctx.f4)
        cost = self.decoder(self.encoder(volume, ctx), ctx)
        d0 = top2_regression(cost)
        d1 = self.upsampler(d0, ctx.f4)
        return d0, d1
