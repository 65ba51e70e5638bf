"""Convolution primitives (2-D and 3-D) and their transposed counterparts.

The forward pass is a strided cross-correlation built from
``sliding_window_view`` + ``tensordot``.  The input-gradient routine is the
exact adjoint of the forward map (dilate the cotangent by the stride, embed it
in a zero buffer, correlate with the channel-swapped spatially-flipped
kernel), and the transposed convolution *is* that adjoint applied as a forward
op.  Sharing one code path guarantees the inner-product identity
``<conv(x), y> == <x, conv_transpose(y)>`` up to roundoff.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, _lift, _node

__all__ = [
    "conv2d",
    "conv3d",
    "conv_transpose2d",
    "conv_transpose3d",
]

_PAD_MODES = ("zeros", "circular")


def _norm_tuple(value, n: int, name: str) -> tuple[int, ...]:
    if isinstance(value, int):
        value = (value,) * n
    value = tuple(int(v) for v in value)
    if len(value) != n:
        raise ShapeError(f"{name} must have {n} entries, got {value}")
    return value


def _slice_axis(arr: np.ndarray, axis: int, start: int, stop: int) -> np.ndarray:
    index = [slice(None)] * arr.ndim
    index[axis] = slice(start, stop)
    return arr[tuple(index)]


def _pad_spatial(x: np.ndarray, padding: tuple[int, ...], mode: str) -> np.ndarray:
    if not any(padding):
        return x
    widths = [(0, 0), (0, 0)] + [(p, p) for p in padding]
    return np.pad(x, widths, mode="constant" if mode == "zeros" else "wrap")


def _corr_forward(x, w, stride, padding, mode) -> np.ndarray:
    """Plain strided correlation of x [B,Ci,*S] with w [Co,Ci,*K] -> [B,Co,*O]."""
    nsp = x.ndim - 2
    xp = _pad_spatial(x, padding, mode)
    for ax in range(nsp):
        if xp.shape[2 + ax] < w.shape[2 + ax]:
            raise ShapeError(
                f"spatial axis {ax}: padded extent {xp.shape[2 + ax]} is smaller "
                f"than kernel extent {w.shape[2 + ax]}"
            )
    win = sliding_window_view(xp, w.shape[2:], axis=tuple(range(2, 2 + nsp)))
    win = win[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)]
    axes_x = [1] + list(range(2 + nsp, 2 + 2 * nsp))
    axes_w = [1] + list(range(2, 2 + nsp))
    out = np.tensordot(win, w, axes=(axes_x, axes_w))
    return np.ascontiguousarray(np.moveaxis(out, -1, 1))


def _corr_kernel_grad(x, g, stride, padding, kshape, mode) -> np.ndarray:
    """Gradient of the correlation above with respect to the kernel."""
    nsp = x.ndim - 2
    xp = _pad_spatial(x, padding, mode)
    win = sliding_window_view(xp, kshape, axis=tuple(range(2, 2 + nsp)))
    win = win[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)]
    axes = ([0] + list(range(2, 2 + nsp)), [0] + list(range(2, 2 + nsp)))
    return np.tensordot(g, win, axes=axes)


def _corr_input_grad(g, w, stride, padding, in_spatial, mode) -> np.ndarray:
    """Adjoint of the correlation: scatter g [B,Co,*O] back to [B,Ci,*S].

    Works by writing g into a zero buffer on a stride-spaced lattice offset by
    K-1, then running a stride-1 correlation with the flipped kernel.  The
    buffer covers the *padded* input; zero padding is cropped away, circular
    padding is folded back onto the opposite edge.
    """
    nsp = len(in_spatial)
    batch, cout = g.shape[:2]
    kshape = w.shape[2:]
    padded = [in_spatial[i] + 2 * padding[i] for i in range(nsp)]
    buf = np.zeros(
        (batch, cout) + tuple(padded[i] + kshape[i] - 1 for i in range(nsp))
    )
    place = (slice(None), slice(None)) + tuple(
        slice(kshape[i] - 1, kshape[i] - 1 + (g.shape[2 + i] - 1) * stride[i] + 1, stride[i])
        for i in range(nsp)
    )
    buf[place] = g
    w_flip = np.flip(w, axis=tuple(range(2, 2 + nsp))).swapaxes(0, 1)
    dxp = _corr_forward(buf, w_flip, (1,) * nsp, (0,) * nsp, "zeros")

    if mode == "zeros":
        crop = (slice(None), slice(None)) + tuple(
            slice(padding[i], padding[i] + in_spatial[i]) for i in range(nsp)
        )
        return np.ascontiguousarray(dxp[crop])

    # Circular: each pad strip wraps around, so its gradient folds back onto
    # the opposite edge of the core region, one axis at a time.
    out = dxp
    for ax in range(nsp):
        p = padding[ax]
        if p == 0:
            continue
        size = out.shape[2 + ax]
        core = _slice_axis(out, 2 + ax, p, size - p).copy()
        n = core.shape[2 + ax]
        left = _slice_axis(out, 2 + ax, 0, p)
        right = _slice_axis(out, 2 + ax, size - p, size)
        tail = [slice(None)] * core.ndim
        tail[2 + ax] = slice(n - p, n)
        core[tuple(tail)] += left
        head = [slice(None)] * core.ndim
        head[2 + ax] = slice(0, p)
        core[tuple(head)] += right
        out = core
    return out


def _check_conv_args(x: Tensor, w: Tensor, nsp: int, op: str) -> None:
    if x.ndim != nsp + 2:
        raise ShapeError(f"{op}: input must have {nsp + 2} axes, got shape {x.shape}")
    if w.ndim != nsp + 2:
        raise ShapeError(f"{op}: kernel must have {nsp + 2} axes, got shape {w.shape}")


def _conv_nd(x, w, bias, stride, padding, pad_mode, nsp, op) -> Tensor:
    x, w = _lift(x), _lift(w)
    _check_conv_args(x, w, nsp, op)
    if pad_mode not in _PAD_MODES:
        raise ShapeError(f"{op}: unknown pad_mode {pad_mode!r}")
    stride = _norm_tuple(stride, nsp, f"{op} stride")
    padding = _norm_tuple(padding, nsp, f"{op} padding")
    if any(s < 1 for s in stride):
        raise ShapeError(f"{op}: stride must be positive, got {stride}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"{op}: input channel axis has extent {x.shape[1]} but kernel expects {w.shape[1]}"
        )
    parents = [x, w]
    if bias is not None:
        bias = _lift(bias)
        if bias.shape != (w.shape[0],):
            raise ShapeError(f"{op}: bias shape {bias.shape} != ({w.shape[0]},)")
        parents.append(bias)

    out = _corr_forward(x.data, w.data, stride, padding, pad_mode)
    if bias is not None:
        out = out + bias.data.reshape((1, -1) + (1,) * nsp)
    in_spatial = x.shape[2:]
    kshape = w.shape[2:]

    def bw(g):
        gx = _corr_input_grad(g, w.data, stride, padding, in_spatial, pad_mode)
        gw = _corr_kernel_grad(x.data, g, stride, padding, kshape, pad_mode)
        if bias is None:
            return gx, gw
        gb = g.sum(axis=(0,) + tuple(range(2, 2 + nsp)))
        return gx, gw, gb

    return _node(out, parents, bw)


def _conv_transpose_nd(x, w, bias, stride, padding, nsp, op) -> Tensor:
    x, w = _lift(x), _lift(w)
    _check_conv_args(x, w, nsp, op)
    stride = _norm_tuple(stride, nsp, f"{op} stride")
    padding = _norm_tuple(padding, nsp, f"{op} padding")
    if any(s < 1 for s in stride):
        raise ShapeError(f"{op}: stride must be positive, got {stride}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"{op}: input channel axis has extent {x.shape[1]} but kernel expects {w.shape[0]}"
        )
    kshape = w.shape[2:]
    out_spatial = tuple(
        (x.shape[2 + i] - 1) * stride[i] - 2 * padding[i] + kshape[i] for i in range(nsp)
    )
    for ax, extent in enumerate(out_spatial):
        if extent < 1:
            raise ShapeError(
                f"{op}: computed output extent {extent} on spatial axis {ax} "
                f"(input {x.shape[2 + ax]}, kernel {kshape[ax]}, stride {stride[ax]}, "
                f"padding {padding[ax]})"
            )
    parents = [x, w]
    if bias is not None:
        bias = _lift(bias)
        if bias.shape != (w.shape[1],):
            raise ShapeError(f"{op}: bias shape {bias.shape} != ({w.shape[1]},)")
        parents.append(bias)

    out = _corr_input_grad(x.data, w.data, stride, padding, out_spatial, "zeros")
    if bias is not None:
        out = out + bias.data.reshape((1, -1) + (1,) * nsp)

    def bw(g):
        gx = _corr_forward(g, w.data, stride, padding, "zeros")
        gw = _corr_kernel_grad(g, x.data, stride, padding, kshape, "zeros")
        if bias is None:
            return gx, gw
        gb = g.sum(axis=(0,) + tuple(range(2, 2 + nsp)))
        return gx, gw, gb

    return _node(out, parents, bw)


def conv2d(x, w, bias=None, stride=1, padding=0, pad_mode: str = "zeros") -> Tensor:
    """Correlate x [B,Ci,H,W] with w [Co,Ci,kh,kw] -> [B,Co,H',W']."""
    return _conv_nd(x, w, bias, stride, padding, pad_mode, 2, "conv2d")


def conv3d(x, w, bias=None, stride=1, padding=0, pad_mode: str = "zeros") -> Tensor:
    """Correlate x [B,Ci,D,H,W] with w [Co,Ci,kd,kh,kw] -> [B,Co,D',H',W'].

    Stride and padding may differ per spatial axis (depth axis included).
    """
    return _conv_nd(x, w, bias, stride, padding, pad_mode, 3, "conv3d")


def conv_transpose2d(x, w, bias=None, stride=1, padding=0) -> Tensor:
    """Adjoint of :func:`conv2d` with the same kernel layout [Cin,Cout,kh,kw]
    seen from this op's point of view: x [B,Cin,H,W] -> [B,Cout,H',W'] with
    H' = (H-1)*stride - 2*padding + kh."""
    return _conv_transpose_nd(x, w, bias, stride, padding, 2, "conv_transpose2d")


def conv_transpose3d(x, w, bias=None, stride=1, padding=0) -> Tensor:
    """Adjoint of :func:`conv3d`; kernel layout [Cin,Cout,kd,kh,kw]."""
    return _conv_transpose_nd(x, w, bias, stride, padding, 3, "conv_transpose3d")
