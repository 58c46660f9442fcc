from . import ops
from .attention import AttentionWeights, ConfigError, mha
from .gradcheck import analytic_jacobian, check_gradients, max_relative_error, numerical_grad, numerical_jacobian
from .nn import MLP, LayerNorm, Linear, Module, MultiHeadAttention, fan_in_uniform, param, trunc_normal
from .optim import AdamW, AdamWState, LrSchedule, adamw_step, lr_at
from .rng import stream
from .tensor import DTYPE, NonFiniteError, ShapeError, Tensor, grad_enabled, no_grad

__all__ = [
    "AdamW", "AdamWState", "AttentionWeights", "ConfigError", "DTYPE", "LayerNorm", "Linear",
    "LrSchedule", "MLP", "Module", "MultiHeadAttention", "NonFiniteError", "ShapeError", "Tensor",
    "adamw_step", "check_gradients", "fan_in_uniform", "grad_enabled", "lr_at", "max_relative_error",
    "analytic_jacobian", "mha", "no_grad", "numerical_grad", "numerical_jacobian", "ops", "param", "stream", "trunc_normal",
]
