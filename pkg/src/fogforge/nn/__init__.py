"""Minimal differentiable tensor core used by the policy networks."""

from fogforge.nn.autodiff import (
    AutodiffUsageError,
    Tensor,
    as_tensor,
    check_finite,
    concat,
    minimum,
    where,
)
from fogforge.nn.layers import (
    BatchNorm,
    Linear,
    Mlp,
    MlpSpec,
    Module,
    masked_entropy,
    masked_log_softmax,
    masked_softmax,
)
from fogforge.nn.optim import Adam, StepDecay, clip_global_norm

__all__ = [
    "Adam",
    "AutodiffUsageError",
    "BatchNorm",
    "Linear",
    "Mlp",
    "MlpSpec",
    "Module",
    "StepDecay",
    "Tensor",
    "as_tensor",
    "check_finite",
    "clip_global_norm",
    "concat",
    "masked_entropy",
    "masked_log_softmax",
    "masked_softmax",
    "minimum",
    "where",
]
