from .model import (
    ModelConfig,
    ValueNetwork,
    appnp_propagate,
    attention_block,
    graph_pool,
    node_features,
    param_count,
    param_layout,
    q_forward,
    value_forward,
)
from .train import AdamState, adam_step, batch_loss, finite_difference_gradient, loss_and_gradient

__all__ = [
    "ModelConfig",
    "ValueNetwork",
    "node_features",
    "attention_block",
    "appnp_propagate",
    "graph_pool",
    "value_forward",
    "q_forward",
    "param_layout",
    "param_count",
    "AdamState",
    "adam_step",
    "batch_loss",
    "loss_and_gradient",
    "finite_difference_gradient",
]
