"""Numeric substrate: tape autodiff, MLPs, Adam, and gradient checks."""

from . import autodiff
from .autodiff import Node, backward, constant
from .gradcheck import fd_error, finite_diff_check, grad, value_and_grad
from .optim import OptState, adam_step, ema_update
from .params import (
    MlpSpec,
    ParamSet,
    load_params,
    mlp_forward,
    mlp_forward_nodes,
    mlp_init,
    save_params,
)

__all__ = [
    "autodiff",
    "Node",
    "backward",
    "constant",
    "fd_error",
    "finite_diff_check",
    "grad",
    "value_and_grad",
    "OptState",
    "adam_step",
    "ema_update",
    "MlpSpec",
    "ParamSet",
    "load_params",
    "mlp_forward",
    "mlp_forward_nodes",
    "mlp_init",
    "save_params",
]
