from .tensor import Parameter, Tensor, concat, gradient, narrow
from .ops import (
    avg_pool2x2,
    conv2d,
    layer_norm,
    log_softmax,
    logabsdet,
    multi_head_self_attention,
    softmax,
)
from .optim import Adam, clip_grad_norm, warmup_polynomial_lr
from .rng import derive_seed, make_rng

__all__ = [
    "Tensor",
    "Parameter",
    "gradient",
    "concat",
    "narrow",
    "conv2d",
    "layer_norm",
    "logabsdet",
    "softmax",
    "log_softmax",
    "multi_head_self_attention",
    "avg_pool2x2",
    "Adam",
    "clip_grad_norm",
    "warmup_polynomial_lr",
    "make_rng",
    "derive_seed",
]
