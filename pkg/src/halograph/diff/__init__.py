__all__ = [
    "Tape",
    "Tensor",
    "backward",
    "linear",
    "silu",
    "gelu",
    "layernorm",
    "concat_cols",
    "add",
    "mul",
    "scale",
    "sum_all",
    "gather_rows",
    "scatter_sum",
    "masked_sse",
    "OptimizerConfig",
    "OptimizerState",
    "cosine_lr",
    "global_norm",
    "clip_by_global_norm",
    "adam_step",
    "tape_gradients",
    "numerical_gradients",
    "max_relative_error",
]

from .tape import Tape, Tensor, backward
from .ops import linear, silu, gelu, layernorm, concat_cols, add, mul, scale, sum_all, gather_rows, scatter_sum, \
    masked_sse
from .optim import OptimizerConfig, OptimizerState, cosine_lr, global_norm, clip_by_global_norm, adam_step
from .gradcheck import tape_gradients, numerical_gradients, max_relative_error
