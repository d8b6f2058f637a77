"""Loss, gradients and the Adam optimizer for the value/Q networks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..game import GameState
from . import autodiff as ad
from .model import ValueNetwork, value_forward_tensor

Batch = Sequence[tuple[GameState, float]]


def batch_loss(net: ValueNetwork, batch: Batch, train: bool = False, rng=None) -> float:
    """Mean squared error of V against the batch targets (no gradient)."""
    if not batch:
        raise ValueError("batch must be non-empty")
    with ad.no_grad():
        total = 0.0
        for state, target in batch:
            vhat, _ = value_forward_tensor(state, net.leaves(), net.config, train=train, rng=rng)
            total += (float(vhat.data) - float(target)) ** 2
    return total / len(batch)


def loss_and_gradient(
    net: ValueNetwork,
    batch: Batch,
    train: bool = True,
    dropout_seed: Optional[int] = None,
) -> tuple[float, np.ndarray]:
    """MSE loss and its gradient w.r.t. the flat parameter vector.

    The dropout mask is drawn from ``dropout_seed``, so the returned
    gradient matches exactly the forward pass that produced the loss.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    grad = np.zeros_like(net.theta, dtype=np.float64)
    if grad.dtype != net.theta.dtype:
        grad = np.zeros_like(net.theta)
    leaves = net.leaves(grad_buf=grad)
    rng = np.random.default_rng(dropout_seed) if train else None
    total = None
    for state, target in batch:
        vhat, _ = value_forward_tensor(state, leaves, net.config, train=train, rng=rng)
        diff = vhat - ad.Tensor(np.asarray(target, dtype=net.config.dtype))
        sq = diff * diff
        total = sq if total is None else total + sq
    loss = total * (1.0 / len(batch))
    ad.backward(loss)
    return float(loss.data), grad


def finite_difference_gradient(
    net: ValueNetwork, batch: Batch, step: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of the eval-mode batch loss.

    Independent oracle for ``loss_and_gradient``; use float64 precision
    and dropout off when comparing.
    """
    theta = net.theta
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + step
        up = batch_loss(net, batch, train=False)
        theta[i] = orig - step
        down = batch_loss(net, batch, train=False)
        theta[i] = orig
        grad[i] = (up - down) / (2.0 * step)
    return grad


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def for_network(cls, net: ValueNetwork) -> "AdamState":
        return cls(np.zeros_like(net.theta), np.zeros_like(net.theta), 0)


def adam_step(
    net: ValueNetwork,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ValueNetwork:
    """One in-place Adam update; returns the (mutated) network."""
    if state.m.shape != net.theta.shape or grad.shape != net.theta.shape:
        raise ValueError("optimizer state/gradient shape mismatch")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    net.theta -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(net.theta.dtype)
    return net
