"""Dense tensor engine: tape-based reverse-mode autodiff over numpy arrays."""

from ibert.numerics.gradcheck import finite_diff_check
from ibert.numerics.ops import (
    add,
    concat,
    dropout,
    embedding,
    gelu,
    layer_norm,
    linear,
    masked_cross_entropy,
    masked_softmax,
    matmul,
    mean_all,
    mul,
    pointwise,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    sub,
    sum_all,
    take,
    tanh,
    transpose,
)
from ibert.numerics.tensor import Tape, Tensor, active_tape, backward, new_tape

__all__ = [
    "Tape",
    "Tensor",
    "active_tape",
    "add",
    "backward",
    "concat",
    "dropout",
    "embedding",
    "finite_diff_check",
    "gelu",
    "layer_norm",
    "linear",
    "masked_cross_entropy",
    "masked_softmax",
    "matmul",
    "mean_all",
    "mul",
    "new_tape",
    "pointwise",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "stack",
    "sub",
    "sum_all",
    "take",
    "tanh",
    "transpose",
]
