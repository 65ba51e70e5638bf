"""Matching cost volume construction.

Three steps: a cosine-similarity correlation volume between left and right
quarter-resolution features, a learned lift of that single channel to a small
channel stack (attention weights over disparity candidates), and the
attention feature volume — left features broadcast along disparity and gated
elementwise by those weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import ConfigError, ShapeError


@dataclass
class MatchingConfig:
    max_disparity: int = 64  # full-resolution pixels
    corr_channels: int = 8
    epsilon: float = 1e-8

    def validate(self) -> "MatchingConfig":
        if self.max_disparity < 4 or self.max_disparity % 4 != 0:
            raise ConfigError(
                f"matching.max_disparity must be a positive multiple of 4, got {self.max_disparity}"
            )
        if self.corr_channels < 1:
            raise ConfigError(f"matching.corr_channels must be >= 1, got {self.corr_channels}")
        if not self.epsilon > 0:
            raise ConfigError(f"matching.epsilon must be positive, got {self.epsilon}")
        return self


@dataclass
class CostVolume:
    """A [B,C,D,H,W] stack of per-disparity values plus its unit bookkeeping:
    `disparity_stride` is how many pixels (at this resolution) one step along
    the D axis represents."""

    data: Tensor
    disparity_stride: float
    resolution: str

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


def build_correlation(f_l: Tensor, f_r: Tensor, cfg: MatchingConfig) -> CostVolume:
    """Cosine similarity between left features and d-shifted right features.

    Output entry (b, 0, d, y, x) compares f_l at column x with f_r at column
    x - d; candidates that would reach past the left image border are exactly
    zero.  A small epsilon keeps the norm product away from zero.
    """
    if f_l.shape != f_r.shape:
        raise ShapeError(f"feature shapes differ: {f_l.shape} vs {f_r.shape}")
    if f_l.ndim != 4:
        raise ShapeError(f"expected [B,C,H,W] features, got {f_l.shape}")
    batch, _, height, width = f_l.shape
    num_disp = cfg.max_disparity // 4
    if num_disp > width:
        raise ShapeError(
            f"max_disparity/4 = {num_disp} exceeds quarter-resolution width {width}"
        )

    # Norms once per image; 1e-30 under the sqrt keeps its gradient finite at
    # exactly-zero feature vectors without moving any realistic value.
    norm_l = ad.sqrt(ad.add(ad.tsum(ad.mul(f_l, f_l), axis=1, keepdims=True), 1e-30))
    norm_r = ad.sqrt(ad.add(ad.tsum(ad.mul(f_r, f_r), axis=1, keepdims=True), 1e-30))

    slices = []
    for d in range(num_disp):
        if d == 0:
            shifted, shifted_norm = f_r, norm_r
        else:
            zeros_f = Tensor(np.zeros((batch, f_r.shape[1], height, d)))
            zeros_n = Tensor(np.zeros((batch, 1, height, d)))
            shifted = ad.concat([zeros_f, ad.narrow(f_r, 3, 0, width - d)], axis=3)
            shifted_norm = ad.concat([zeros_n, ad.narrow(norm_r, 3, 0, width - d)], axis=3)
        numer = ad.tsum(ad.mul(f_l, shifted), axis=1, keepdims=True)
        denom = ad.add(ad.mul(norm_l, shifted_norm), cfg.epsilon)
        slices.append(ad.div(numer, denom))
    volume = ad.reshape(ad.concat(slices, axis=1), (batch, 1, num_disp, height, width))
    return CostVolume(volume, disparity_stride=1.0, resolution="quarter")


class CorrelationLift(nn.Module):
    """Grow the 1-channel correlation volume to `corr_channels` channels with
    a per-disparity-slice 3x3 conv (kernel 1x3x3) + BatchNorm + leaky ReLU."""

    def __init__(self, cfg: MatchingConfig, rng: np.random.Generator, slope: float = 0.2):
        super().__init__()
        self.block = nn.ConvBnLeaky3d(1, cfg.corr_channels, (1, 3, 3), rng, slope=slope)

    def forward(self, volume: CostVolume) -> CostVolume:
        if volume.data.shape[1] != 1:
            raise ShapeError(f"lift expects a 1-channel volume, got {volume.data.shape}")
        return CostVolume(self.block(volume.data), volume.disparity_stride, volume.resolution)


class AttentionFeatureVolume(nn.Module):
    """Gate broadcast left features with the lifted correlation attention.

    The left features are first mapped to the attention channel count with a
    bias-free 1x1 conv, so zero features stay exactly zero, then repeated
    along the disparity axis and multiplied elementwise with the attention.
    """

    def __init__(self, feature_channels: int, cfg: MatchingConfig, rng: np.random.Generator):
        super().__init__()
        self.project = nn.Conv2d(feature_channels, cfg.corr_channels, 1, rng, bias=False)

    def forward(self, a_corr: CostVolume, f_l: Tensor) -> CostVolume:
        batch, channels, num_disp, height, width = a_corr.data.shape
        if f_l.shape[2] != height or f_l.shape[3] != width:
            raise ShapeError(
                f"feature extent {f_l.shape[2:]} does not match volume extent {(height, width)}"
            )
        projected = self.project(f_l)
        if projected.shape[1] != channels:
            raise ShapeError(
                f"projected features have {projected.shape[1]} channels, "
                f"attention volume has {channels}"
            )
        broadcast = ad.expand(
            ad.reshape(projected, (batch, channels, 1, height, width)),
            (batch, channels, num_disp, height, width),
        )
        return CostVolume(
            ad.mul(a_corr.data, broadcast), a_corr.disparity_stride, a_corr.resolution
        )
