from .layers import (
    ActNorm,
    AffineCoupling,
    AttentionStack,
    ConvStack,
    InvConv1x1,
    couple,
    factor_out,
    merge,
    squeeze,
    squeeze_array,
    uncouple,
    unsqueeze,
    unsqueeze_array,
)
from .model import FlowConfig, FlowStep, LatentCode, MultiScaleFlow

__all__ = [
    "ActNorm",
    "AffineCoupling",
    "AttentionStack",
    "ConvStack",
    "InvConv1x1",
    "couple",
    "uncouple",
    "squeeze",
    "unsqueeze",
    "squeeze_array",
    "unsqueeze_array",
    "factor_out",
    "merge",
    "FlowConfig",
    "FlowStep",
    "LatentCode",
    "MultiScaleFlow",
]
