"""Self-contained reverse-mode autodiff engine used by the whole package."""

from .conv import conv2d, conv3d, conv_transpose2d, conv_transpose3d
from .gradcheck import grad_check
from .tensor import (
    Tensor,
    absval,
    add,
    backward,
    batch_norm,
    concat,
    div,
    exp,
    expand,
    is_grad_enabled,
    leaky_relu,
    mul,
    narrow,
    no_grad,
    reshape,
    sigmoid,
    softmax,
    sqrt,
    sub,
    tsum,
)

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
    "conv2d",
    "conv3d",
    "conv_transpose2d",
    "conv_transpose3d",
    "grad_check",
]
