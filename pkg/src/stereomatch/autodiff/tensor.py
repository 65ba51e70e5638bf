"""Reverse-mode automatic differentiation over float64 numpy arrays.

Each operation produces a new :class:`Tensor` that remembers its parents and
a backward rule.  :func:`backward` replays the recorded graph once in reverse
topological order and accumulates gradients into every tensor that requires
them.  Values are plain ``numpy`` arrays throughout; nothing here is lazy.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import GraphError, ShapeError

__all__ = [
    "Tensor",
    "no_grad",
    "is_grad_enabled",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "exp",
    "sqrt",
    "absval",
    "sigmoid",
    "leaky_relu",
    "reshape",
    "expand",
    "narrow",
    "concat",
    "tsum",
    "softmax",
    "batch_norm",
]

_GRAD_ENABLED = True


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class no_grad:
    """Context manager that suspends graph recording (forward values only)."""

    def __enter__(self) -> "no_grad":
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc) -> None:
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse-mode autodiff.

    Attributes
    ----------
    data:
        The value, always a ``numpy.ndarray`` of dtype float64.  Treated as
        immutable once the tensor has entered a graph (optimizers may rewrite
        leaf data between graph lifetimes).
    grad:
        Accumulated gradient, ``None`` until populated by :func:`backward`.
    requires_grad:
        Whether gradients should flow into this tensor.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_spent")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple["Tensor", ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None
        self._spent = False

    # -- conveniences -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Return a value-identical tensor through which no gradient flows."""
        return Tensor(self.data)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)


def _lift(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    """Create a graph node; records parents only while gradients are enabled."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def backward(loss: Tensor, ensure: Iterable[Tensor] = ()) -> None:
    """Run one reverse pass from scalar `loss`.

    Populates ``grad`` on every tensor that requires gradients and lies on a
    path to `loss`.  Tensors in `ensure` that the sweep never reaches get an
    explicit all-zero gradient so callers can treat every parameter uniformly.
    A graph may be swept only once; a second call on the same loss raises.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    if loss._spent:
        raise GraphError("backward was already run for this graph; rebuild it first")
    loss._spent = True

    # Iterative post-order walk; graphs are deep enough that recursion is unsafe.
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is None or node.grad is None:
            continue
        parent_grads = node._backward(node.grad)
        for parent, grad in zip(node._parents, parent_grads):
            if grad is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = grad
            else:
                parent.grad = parent.grad + grad

    for tensor in ensure:
        if tensor.requires_grad and tensor.grad is None:
            tensor.grad = np.zeros_like(tensor.data)


# -- elementwise arithmetic --------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "div")

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _node(a.data / b.data, (a, b), bw)


def exp(t) -> Tensor:
    t = _lift(t)
    out_data = np.exp(t.data)

    def bw(g):
        return (g * out_data,)

    return _node(out_data, (t,), bw)


def sqrt(t) -> Tensor:
    t = _lift(t)
    out_data = np.sqrt(t.data)

    def bw(g):
        return (g * 0.5 / out_data,)

    return _node(out_data, (t,), bw)


def absval(t) -> Tensor:
    t = _lift(t)

    def bw(g):
        return (g * np.sign(t.data),)

    return _node(np.abs(t.data), (t,), bw)


def sigmoid(t) -> Tensor:
    """Logistic function with outputs clamped to the open interval (0, 1)."""
    t = _lift(t)
    # Branch on sign so neither exp overflows; then keep strictly inside (0, 1)
    # for downstream code that divides by y or (1 - y).
    x = t.data
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)
    tiny = np.nextafter(0.0, 1.0)
    np.clip(out_data, tiny, np.nextafter(1.0, 0.0), out=out_data)

    def bw(g):
        return (g * out_data * (1.0 - out_data),)

    return _node(out_data, (t,), bw)


def leaky_relu(t, negative_slope: float = 0.2) -> Tensor:
    t = _lift(t)
    scale = np.where(t.data >= 0, 1.0, negative_slope)

    def bw(g):
        return (g * scale,)

    return _node(t.data * scale, (t,), bw)


# -- shape manipulation -------------------------------------------------------


def reshape(t, shape: tuple[int, ...]) -> Tensor:
    t = _lift(t)
    try:
        out_data = t.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {t.shape} to {shape}") from None
    in_shape = t.shape

    def bw(g):
        return (g.reshape(in_shape),)

    return _node(out_data, (t,), bw)


def expand(t, shape: tuple[int, ...]) -> Tensor:
    """Broadcast `t` to `shape`; only axes of extent 1 (or new leading axes)
    may be repeated."""
    t = _lift(t)
    shape = tuple(int(s) for s in shape)
    if len(shape) < t.ndim:
        raise ShapeError(f"expand cannot drop axes: {t.shape} -> {shape}")
    lead = len(shape) - t.ndim
    for i, (src, dst) in enumerate(zip(t.shape, shape[lead:])):
        if src != dst and src != 1:
            raise ShapeError(
                f"expand: axis {lead + i} has extent {src}, cannot repeat to {dst}"
            )
    out_data = np.broadcast_to(t.data, shape).copy()
    in_shape = t.shape

    def bw(g):
        return (_unbroadcast(g, in_shape),)

    return _node(out_data, (t,), bw)


def narrow(t, axis: int, start: int, length: int) -> Tensor:
    """Slice `length` entries starting at `start` along `axis`."""
    t = _lift(t)
    extent = t.shape[axis]
    if start < 0 or length < 0 or start + length > extent:
        raise ShapeError(
            f"narrow: window [{start}, {start + length}) exceeds extent {extent} on axis {axis}"
        )
    index = [slice(None)] * t.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    in_shape = t.shape

    def bw(g):
        full = np.zeros(in_shape)
        full[index] = g
        return (full,)

    return _node(t.data[index].copy(), (t,), bw)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    parts = [_lift(t) for t in tensors]
    if not parts:
        raise ShapeError("concat of zero tensors")
    base = list(parts[0].shape)
    for p in parts[1:]:
        other = list(p.shape)
        probe_a, probe_b = list(base), other[:]
        probe_a[axis] = probe_b[axis] = 0
        if probe_a != probe_b:
            raise ShapeError(
                f"concat: shapes {parts[0].shape} and {p.shape} differ off axis {axis}"
            )
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        grads = []
        for i in range(len(parts)):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(index)])
        return tuple(grads)

    return _node(np.concatenate([p.data for p in parts], axis=axis), parts, bw)


def tsum(t, axis=None, keepdims: bool = False) -> Tensor:
    t = _lift(t)
    in_shape = t.shape
    if axis is None:
        axes = tuple(range(t.ndim))
    elif isinstance(axis, int):
        axes = (axis % t.ndim,)
    else:
        axes = tuple(a % t.ndim for a in axis)

    def bw(g):
        if not keepdims:
            kept = list(g.shape)
            for a in sorted(axes):
                kept.insert(a, 1)
            g = g.reshape(kept)
        return (np.broadcast_to(g, in_shape),)

    return _node(t.data.sum(axis=axes, keepdims=keepdims), (t,), bw)


# -- composites used widely ---------------------------------------------------


def softmax(t: Tensor, axis: int) -> Tensor:
    """Max-stabilized softmax along `axis`, composed from primitives."""
    t = _lift(t)
    shift = sub(t, np.max(t.data, axis=axis, keepdims=True))
    e = exp(shift)
    return div(e, tsum(e, axis=axis, keepdims=True))


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    *,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalization over all axes except axis 1 (channels).

    In training mode the batch statistics normalize `x` and the running
    buffers are updated in place with ``(1 - momentum) * old + momentum * new``
    (unbiased variance in the buffer, biased in the normalization, matching
    the usual convention).  In eval mode the running buffers normalize `x`.
    """
    x = _lift(x)
    if x.ndim < 2:
        raise ShapeError(f"batch_norm expects a channel axis, got shape {x.shape}")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(
            f"batch_norm: gamma/beta must have shape ({channels},), "
            f"got {gamma.shape} and {beta.shape}"
        )
    cshape = (1, channels) + (1,) * (x.ndim - 2)

    if not training:
        inv = 1.0 / np.sqrt(running_var + eps)
        xn = mul(sub(x, running_mean.reshape(cshape)), inv.reshape(cshape))
        return add(mul(xn, reshape(gamma, cshape)), reshape(beta, cshape))

    axes = (0,) + tuple(range(2, x.ndim))
    mean = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    count = x.data.size // channels
    if running_mean is not None:
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        unbiased = var * count / (count - 1) if count > 1 else var
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased

    std = np.sqrt(var + eps).reshape(cshape)
    xhat = (x.data - mean.reshape(cshape)) / std
    out_data = gamma.data.reshape(cshape) * xhat + beta.data.reshape(cshape)

    def bw(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(cshape)
        m1 = dxhat.mean(axis=axes, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=axes, keepdims=True)
        dx = (dxhat - m1 - xhat * m2) / std
        return dx, dgamma, dbeta

    return _node(out_data, (x, gamma, beta), bw)
