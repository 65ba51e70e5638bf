"""Minimal layer system: modules, parameter registration, common layers.

Parameters are initialized uniformly in ``[-b, b]`` with ``b = sqrt(1/fan_in)``
from an explicitly passed ``numpy.random.Generator``, so a model built twice
from the same seed is bit-identical.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError


class Parameter(Tensor):
    """A tensor that is always trainable."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class with torch-style attribute registration."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, array: np.ndarray) -> None:
        """Track a non-trainable array (e.g. running statistics) as state."""
        array = np.asarray(array, dtype=np.float64)
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    # -- traversal ----------------------------------------------------------

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(prefix + cname + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(prefix + cname + ".")

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Parameters and buffers, keyed by dotted path, in a stable order."""
        state = {name: p.data for name, p in self.named_parameters()}
        for name, b in self.named_buffers():
            state[name] = b
        return state

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    # -- mode / grads -------------------------------------------------------

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Sequential(Module):
    def __init__(self, *mods: Module):
        super().__init__()
        for i, m in enumerate(mods):
            setattr(self, str(i), m)

    def __iter__(self):
        return iter(self._children.values())

    def forward(self, x):
        for m in self._children.values():
            x = m(x)
        return x


class ModuleList(Module):
    def __init__(self, mods=()):
        super().__init__()
        self._size = 0
        for m in mods:
            self.append(m)

    def append(self, m: Module) -> None:
        setattr(self, str(self._size), m)
        object.__setattr__(self, "_size", self._size + 1)

    def __len__(self):
        return self._size

    def __iter__(self):
        return (getattr(self, str(i)) for i in range(self._size))

    def __getitem__(self, i: int) -> Module:
        return getattr(self, str(i))

    def forward(self, *args, **kwargs):
        raise ShapeError("ModuleList is a container; call its entries")


def _pair(v) -> tuple[int, int]:
    return (v, v) if isinstance(v, int) else tuple(v)


def _triple(v) -> tuple[int, int, int]:
    return (v, v, v) if isinstance(v, int) else tuple(v)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=None,
                 bias=True, pad_mode="zeros"):
        super().__init__()
        kernel = _pair(kernel)
        self.stride = _pair(stride)
        self.padding = tuple((k - 1) // 2 for k in kernel) if padding is None else _pair(padding)
        self.pad_mode = pad_mode
        fan_in = in_ch * kernel[0] * kernel[1]
        self.weight = Parameter(uniform_fan_in(rng, (out_ch, in_ch) + kernel, fan_in))
        self.bias = Parameter(uniform_fan_in(rng, (out_ch,), fan_in)) if bias else None

    def forward(self, x):
        return ad.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.pad_mode)


class Conv3d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=None, bias=True):
        super().__init__()
        kernel = _triple(kernel)
        self.stride = _triple(stride)
        self.padding = tuple((k - 1) // 2 for k in kernel) if padding is None else _triple(padding)
        fan_in = in_ch * kernel[0] * kernel[1] * kernel[2]
        self.weight = Parameter(uniform_fan_in(rng, (out_ch, in_ch) + kernel, fan_in))
        self.bias = Parameter(uniform_fan_in(rng, (out_ch,), fan_in)) if bias else None

    def forward(self, x):
        return ad.conv3d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=0, bias=True):
        super().__init__()
        kernel = _pair(kernel)
        self.stride = _pair(stride)
        self.padding = _pair(padding)
        fan_in = in_ch * kernel[0] * kernel[1]
        self.weight = Parameter(uniform_fan_in(rng, (in_ch, out_ch) + kernel, fan_in))
        self.bias = Parameter(uniform_fan_in(rng, (out_ch,), fan_in)) if bias else None

    def forward(self, x):
        return ad.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose3d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=0, bias=True):
        super().__init__()
        kernel = _triple(kernel)
        self.stride = _triple(stride)
        self.padding = _triple(padding)
        fan_in = in_ch * kernel[0] * kernel[1] * kernel[2]
        self.weight = Parameter(uniform_fan_in(rng, (in_ch, out_ch) + kernel, fan_in))
        self.bias = Parameter(uniform_fan_in(rng, (out_ch,), fan_in)) if bias else None

    def forward(self, x):
        return ad.conv_transpose3d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm(Module):
    """Batch normalization over every axis except the channel axis; works for
    both 4-D and 5-D activations."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))

    def forward(self, x):
        return ad.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            training=self.training, momentum=self.momentum, eps=self.eps,
        )


class LeakyReLU(Module):
    def __init__(self, negative_slope: float = 0.2):
        super().__init__()
        self.negative_slope = negative_slope

    def forward(self, x):
        return ad.leaky_relu(x, self.negative_slope)


class ConvBnLeaky2d(Module):
    """3x3-style conv -> BatchNorm -> LeakyReLU block (conv runs bias-free
    since the norm would cancel a bias anyway)."""

    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=None,
                 slope=0.2, pad_mode="zeros"):
        super().__init__()
        self.conv = Conv2d(in_ch, out_ch, kernel, rng, stride, padding,
                           bias=False, pad_mode=pad_mode)
        self.bn = BatchNorm(out_ch)
        self.slope = slope

    def forward(self, x):
        return ad.leaky_relu(self.bn(self.conv(x)), self.slope)


class ConvBnLeaky3d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=None, slope=0.2):
        super().__init__()
        self.conv = Conv3d(in_ch, out_ch, kernel, rng, stride, padding, bias=False)
        self.bn = BatchNorm(out_ch)
        self.slope = slope

    def forward(self, x):
        return ad.leaky_relu(self.bn(self.conv(x)), self.slope)
