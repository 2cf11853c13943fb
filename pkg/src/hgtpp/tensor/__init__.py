"""Minimal dense tensor math with reverse-mode automatic differentiation."""
import numpy as np

from . import ops
from .core import (
    DomainError,
    Parameter,
    Record,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    as_tensor,
    backward,
    current_tape,
    no_recording,
    recording,
)
from .gradcheck import finite_difference_check

_UNARY = {
    "tanh": ops.tanh,
    "cos": ops.cos,
    "exp": ops.exp,
    "log": ops.log,
    "square": ops.square,
    "softplus": ops.softplus,
    "softmax": ops.softmax,
    "mean": ops.mean,
    "transpose": ops.transpose,
}
_BINARY = {
    "matmul": ops.matmul,
    "add": ops.add,
    "sub": ops.sub,
    "mul": ops.mul,
    "dot": ops.dot,
}


def apply(kind, *inputs, **kwargs):
    """Apply a primitive by name, e.g. ``apply("matmul", a, b)``."""
    if kind in _UNARY:
        if len(inputs) != 1:
            raise ShapeError(f"{kind}: expected 1 input, got {len(inputs)}")
        return _UNARY[kind](inputs[0], **kwargs)
    if kind in _BINARY:
        if len(inputs) != 2:
            raise ShapeError(f"{kind}: expected 2 inputs, got {len(inputs)}")
        return _BINARY[kind](*inputs)
    if kind == "scale":
        return ops.scale(inputs[0], kwargs.get("c", inputs[1] if len(inputs) > 1 else 1.0))
    if kind == "concat":
        return ops.concat(inputs, **kwargs)
    raise ValueError(f"unknown primitive {kind!r}")


def uniform_init(rng, shape, fan):
    """Uniform(-1/sqrt(fan), 1/sqrt(fan)) weights."""
    bound = 1.0 / np.sqrt(fan)
    return rng.uniform(-bound, bound, size=shape)


__all__ = [
    "DomainError", "Parameter", "Record", "ShapeError", "Tape", "TapeError", "Tensor",
    "apply", "as_tensor", "backward", "current_tape", "finite_difference_check",
    "no_recording", "ops", "recording", "uniform_init",
]
