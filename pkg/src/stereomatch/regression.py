"""Disparity read-out: top-2 soft-argmax and learned convex upsampling.

The aggregated cost volume is reduced to a quarter-resolution disparity map
by softmaxing only the two best-scoring candidates per pixel, then brought to
full resolution as a per-pixel convex combination of the 3x3 coarse
neighborhood with weights predicted from the quarter-resolution context
features (16 fine positions per coarse cell, 9 weights each).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .autodiff.tensor import _node
from .correlation import CostVolume
from .errors import ShapeError


@dataclass
class DisparityMap:
    """Disparity field in pixels of its own grid ('quarter' or 'full')."""

    values: Tensor
    resolution: str


def top2_softargmax(cost: Tensor) -> Tensor:
    """Per-pixel expectation over a 2-way softmax of the two largest costs.

    cost: [B,1,D,H,W] -> [B,1,H,W].  Ties resolve to the smaller disparity
    index first.  Gradients flow only through the two selected cost values;
    the selection itself is treated as constant.
    """
    if cost.ndim != 5 or cost.shape[1] != 1:
        raise ShapeError(f"expected [B,1,D,H,W] cost, got {cost.shape}")
    num_disp = cost.shape[2]
    if num_disp < 2:
        raise ShapeError(f"top-2 selection needs D >= 2, got D={num_disp}")

    c = cost.data[:, 0]  # [B,D,H,W]
    order = np.argsort(-c, axis=1, kind="stable")
    i1 = order[:, 0]
    i2 = order[:, 1]
    v1 = np.take_along_axis(c, i1[:, None], axis=1)[:, 0]
    v2 = np.take_along_axis(c, i2[:, None], axis=1)[:, 0]
    # v1 >= v2, so exp(v2 - v1) <= 1 and nothing overflows.
    e2 = np.exp(v2 - v1)
    w1 = 1.0 / (1.0 + e2)
    w2 = e2 / (1.0 + e2)
    d0 = w1 * i1 + w2 * i2

    def bw(g):
        gg = g[:, 0]
        coef = gg * w1 * w2 * (i1 - i2)
        dc = np.zeros_like(c)
        np.put_along_axis(dc, i1[:, None], coef[:, None], axis=1)
        np.put_along_axis(dc, i2[:, None], -coef[:, None], axis=1)
        return (dc[:, None],)

    return _node(d0[:, None], (cost,), bw)


def top2_regression(cost: CostVolume) -> DisparityMap:
    if cost.data.shape[1] != 1:
        raise ShapeError(f"regression expects a 1-channel cost volume, got {cost.shape}")
    return DisparityMap(top2_softargmax(cost.data), cost.resolution)


def unfold3x3(x: Tensor) -> Tensor:
    """Stack each pixel's 3x3 neighborhood into 9 channels, clamping at the
    image edge.  x: [B,1,h,w] -> [B,9,h,w]; channel k = (dy+1)*3 + (dx+1)."""
    if x.ndim != 4 or x.shape[1] != 1:
        raise ShapeError(f"unfold3x3 expects [B,1,h,w], got {x.shape}")
    batch, _, h, w = x.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
    out = np.concatenate(
        [xp[:, :, dy : dy + h, dx : dx + w] for dy in range(3) for dx in range(3)],
        axis=1,
    )

    def bw(g):
        padded = np.zeros((batch, 1, h + 2, w + 2))
        for k in range(9):
            dy, dx = divmod(k, 3)
            padded[:, :, dy : dy + h, dx : dx + w] += g[:, k : k + 1]
        rows = padded[:, :, 1:-1, :].copy()
        rows[:, :, 0, :] += padded[:, :, 0, :]
        rows[:, :, -1, :] += padded[:, :, -1, :]
        dx_full = rows[:, :, :, 1:-1].copy()
        dx_full[:, :, :, 0] += rows[:, :, :, 0]
        dx_full[:, :, :, -1] += rows[:, :, :, -1]
        return (dx_full,)

    return _node(out, (x,), bw)


def pixel_shuffle(x: Tensor, factor: int) -> Tensor:
    """Rearrange [B, C*r*r, h, w] -> [B, C, r*h, r*w]; channel index
    c*r*r + ri*r + ci lands on output pixel (i*r + ri, j*r + ci)."""
    batch, ch, h, w = x.shape
    r = factor
    if ch % (r * r) != 0:
        raise ShapeError(f"pixel_shuffle: {ch} channels not divisible by {r * r}")
    cout = ch // (r * r)
    out = (
        x.data.reshape(batch, cout, r, r, h, w)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(batch, cout, h * r, w * r)
    )

    def bw(g):
        back = (
            g.reshape(batch, cout, h, r, w, r)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(batch, ch, h, w)
        )
        return (back,)

    return _node(out, (x,), bw)


class SuperpixelUpsample(nn.Module):
    """Predict, from the quarter-resolution context features, a softmax over
    the 9 coarse neighbors for each of the 16 fine positions per coarse cell;
    the full-resolution disparity is the convex combination scaled by 4."""

    SCALE = 4

    def __init__(self, ctx_channels: int, rng: np.random.Generator,
                 hidden: int = 32, slope: float = 0.2):
        super().__init__()
        self.conv1 = nn.Conv2d(ctx_channels, hidden, 3, rng)
        self.conv2 = nn.Conv2d(hidden, 9 * self.SCALE * self.SCALE, 3, rng)
        self.slope = slope

    def forward(self, d0: DisparityMap, ctx_f4: Tensor) -> DisparityMap:
        values = d0.values
        if values.ndim != 4 or values.shape[1] != 1:
            raise ShapeError(f"expected [B,1,h,w] disparity, got {values.shape}")
        if ctx_f4.shape[2:] != values.shape[2:]:
            raise ShapeError(
                f"context extent {ctx_f4.shape[2:]} != disparity extent {values.shape[2:]}"
            )
        batch, _, h, w = values.shape
        cells = self.SCALE * self.SCALE
        logits = self.conv2(ad.leaky_relu(self.conv1(ctx_f4), self.slope))
        weights = ad.softmax(ad.reshape(logits, (batch, 9, cells, h, w)), axis=1)
        neighbors = ad.expand(
            ad.reshape(unfold3x3(values), (batch, 9, 1, h, w)),
            (batch, 9, cells, h, w),
        )
        combined = ad.tsum(ad.mul(weights, neighbors), axis=1)  # [B,16,h,w]
        fine = pixel_shuffle(combined, self.SCALE)
        return DisparityMap(ad.mul(fine, float(self.SCALE)), "full")
