"""Minimal tensor algebra with reverse-mode autodiff."""
from . import ops
from .gradcheck import GradCheckResult, check_gradients, numerical_grad, relative_error
from .nn import Conv2d, LayerNorm, Linear, Module
from .ops import (
    activation,
    bilinear_upsample,
    conv2d,
    gelu,
    layer_norm,
    leaky_relu,
    matmul,
    relu,
    softmax,
)
from .tensor import (
    Parameter,
    Tensor,
    as_tensor,
    debug_checks,
    get_default_dtype,
    precision,
    set_default_dtype,
)


def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar loss; see :meth:`Tensor.backward`."""
    loss.backward()


__all__ = [
    "Conv2d",
    "GradCheckResult",
    "LayerNorm",
    "Linear",
    "Module",
    "Parameter",
    "Tensor",
    "activation",
    "as_tensor",
    "backward",
    "bilinear_upsample",
    "check_gradients",
    "conv2d",
    "debug_checks",
    "gelu",
    "get_default_dtype",
    "layer_norm",
    "leaky_relu",
    "matmul",
    "numerical_grad",
    "ops",
    "precision",
    "relative_error",
    "relu",
    "set_default_dtype",
    "softmax",
]
