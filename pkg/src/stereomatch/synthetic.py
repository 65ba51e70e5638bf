"""Random-dot stereogram generator with exact ground truth.

The right image is the textured source; each left pixel samples its row of
the right image at u = x - d(x) with linear interpolation, so warping the
right image by the ground-truth disparity reproduces the left image exactly
on non-occluded pixels.  Pixels whose target falls outside the frame, or is
covered by a nearer surface, are marked occluded and filled with fresh noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError

MODES = ("constant", "slanted_planes", "blobs")


@dataclass
class StereoSample:
    left: Tensor            # [1,3,H,W] in [0,1]
    right: Tensor           # [1,3,H,W] in [0,1]
    gt_disparity: np.ndarray   # [1,1,H,W], full-resolution pixels
    valid_mask: np.ndarray     # [1,1,H,W] bool, usable for supervision
    occlusion_mask: np.ndarray  # [1,1,H,W] bool, 1 = occluded


def _check_dims(height: int, width: int, max_disparity: int) -> None:
    if height % 32 or width % 32 or height <= 0 or width <= 0:
        raise ConfigError(f"image extents must be positive multiples of 32, got {height}x{width}")
    if max_disparity % 4 or max_disparity <= 0:
        raise ConfigError(f"max_disparity must be a positive multiple of 4, got {max_disparity}")


def _quantize_quarter(d: np.ndarray) -> np.ndarray:
    return np.round(d * 4.0) / 4.0


def _disparity_field(rng, mode, height, width, max_disparity, constant_disparity):
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    if mode == "constant":
        if not 0 <= constant_disparity < max_disparity:
            raise ConfigError(
                f"constant_disparity must lie in [0, {max_disparity}), got {constant_disparity}"
            )
        return np.full((height, width), float(constant_disparity))
    if mode == "slanted_planes":
        centers = rng.uniform(0, 1, (4, 2)) * [height, width]
        dist = ((y[..., None] - centers[:, 0]) ** 2
                + (x[..., None] - centers[:, 1]) ** 2)
        region = np.argmin(dist, axis=-1)
        d = np.zeros((height, width))
        for k in range(4):
            a = rng.uniform(-0.5, 0.5) * max_disparity / width
            b = rng.uniform(-0.5, 0.5) * max_disparity / height
            c = rng.uniform(0.25, 0.75) * max_disparity
            d[region == k] = (a * x + b * y + c)[region == k]
    elif mode == "blobs":
        d = np.full((height, width), rng.uniform(0.1, 0.3) * max_disparity)
        for _ in range(4):
            cy, cx = rng.uniform(0, height), rng.uniform(0, width)
            sigma = rng.uniform(height / 8, height / 3)
            amp = rng.uniform(0.2, 0.5) * max_disparity
            d += amp * np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2 * sigma**2))
    else:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    return _quantize_quarter(np.clip(d, 0.0, max_disparity - 1.0))


def _sample_rows(img: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Linearly interpolate each row of [C,H,W] at the positions u [H,W]."""
    i0 = np.clip(np.floor(u).astype(int), 0, img.shape[2] - 1)
    i1 = np.clip(i0 + 1, 0, img.shape[2] - 1)
    frac = u - np.floor(u)
    rows = np.arange(img.shape[1])[:, None]
    return (1.0 - frac) * img[:, rows, i0] + frac * img[:, rows, i1]


def synth_stereo(seed: int, height: int = 64, width: int = 128,
                 max_disparity: int = 64, mode: str = "blobs",
                 constant_disparity: float = 0.0) -> StereoSample:
    """Generate one stereo pair with dense exact ground truth.

    mode "constant" shifts the whole frame by constant_disparity;
    "slanted_planes" uses a Voronoi patchwork of tilted planes;
    "blobs" uses smooth Gaussian bumps.  Continuous modes are quantized to
    quarter-pixel disparities.
    """
    _check_dims(height, width, max_disparity)
    rng = np.random.default_rng(seed)
    d = _disparity_field(rng, mode, height, width, max_disparity, constant_disparity)

    dots = (rng.random((height, width)) < 0.5).astype(np.float64)
    bright = rng.random((3, height, width))
    dark = rng.random((3, height, width))
    right = dots * (0.75 + 0.25 * bright) + (1.0 - dots) * (0.25 * dark)

    u = np.arange(width)[None, :] - d  # right-image column for each left pixel
    in_range = (u >= 0.0) & (u <= width - 1.0)
    # A left pixel is covered when some pixel further right lands at the same
    # right-image column or one to its left (nearer surface wins the ray).
    suffix_min = np.full_like(u, np.inf)
    suffix_min[:, :-1] = np.minimum.accumulate(u[:, ::-1], axis=1)[:, ::-1][:, 1:]
    occluded = (suffix_min <= u) | ~in_range

    left = _sample_rows(right, u)
    noise = rng.random((3, height, width))
    left = np.where(occluded[None], noise, left)

    valid = ~occluded  # gt is clamped inside [0, max_disparity) by construction
    return StereoSample(
        left=Tensor(left[None]),
        right=Tensor(right[None]),
        gt_disparity=d[None, None],
        valid_mask=valid[None, None],
        occlusion_mask=occluded[None, None],
    )
