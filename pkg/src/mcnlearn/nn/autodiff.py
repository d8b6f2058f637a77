"""Minimal reverse-mode autodiff over numpy arrays.

A ``Tensor`` wraps an ndarray and records the backward closure of the op
that produced it. ``backward(loss)`` walks the tape in reverse topological
order. Inside ``no_grad()`` ops return untracked tensors, which is the
cheap inference path.

Only the ops the value network needs are implemented; gradients are
validated against central finite differences in the test suite.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Optional

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward", "requires_grad")

    def __init__(self, data, parents=(), backward=None, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g):
        if self.grad is None:
            # Copy: backward closures may hand the same array to two parents.
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    # operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.data.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    @property
    def T(self):
        return transpose(self)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, tracked={self._backward is not None})"


def _wrap(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _tracked(*parents: Tensor) -> bool:
    if not _GRAD_ENABLED:
        return False
    return any(p.requires_grad or p._backward is not None for p in parents)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _make(data, parents, backward) -> Tensor:
    if not _tracked(*parents):
        return Tensor(data)
    return Tensor(data, parents=parents, backward=backward)


# -- primitive ops --------------------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def bw(g):
        a._accum(_unbroadcast(g, a.data.shape))
        b._accum(_unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), bw)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data - b.data

    def bw(g):
        a._accum(_unbroadcast(g, a.data.shape))
        b._accum(_unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), bw)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def bw(g):
        a._accum(_unbroadcast(g * b.data, a.data.shape))
        b._accum(_unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), bw)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data / b.data

    def bw(g):
        a._accum(_unbroadcast(g / b.data, a.data.shape))
        b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(out_data, (a, b), bw)


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data @ b.data

    def bw(g):
        a._accum(g @ b.data.T)
        b._accum(a.data.T @ g)

    return _make(out_data, (a, b), bw)


def transpose(a):
    a = _wrap(a)

    def bw(g):
        a._accum(g.T)

    return _make(a.data.T, (a,), bw)


def power(a, p: float):
    a = _wrap(a)
    out_data = a.data**p

    def bw(g):
        a._accum(g * p * a.data ** (p - 1))

    return _make(out_data, (a,), bw)


def exp(a):
    a = _wrap(a)
    out_data = np.exp(a.data)

    def bw(g):
        a._accum(g * out_data)

    return _make(out_data, (a,), bw)


def tensor_sum(a, axis=None, keepdims=False):
    a = _wrap(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(g, a.data.shape).copy())

    return _make(out_data, (a,), bw)


def leaky_relu(a, slope: float = 0.2):
    a = _wrap(a)
    out_data = np.where(a.data > 0, a.data, slope * a.data)

    def bw(g):
        a._accum(g * np.where(a.data > 0, 1.0, slope))

    return _make(out_data, (a,), bw)


def relu(a):
    a = _wrap(a)
    out_data = np.maximum(a.data, 0.0)

    def bw(g):
        a._accum(g * (a.data > 0))

    return _make(out_data, (a,), bw)


def sigmoid(a):
    a = _wrap(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        a._accum(g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), bw)


def concat(tensors, axis: int = 0):
    tensors = [_wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def bw(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + size)
            t._accum(g[tuple(sl)])
            offset += size

    return _make(out_data, tuple(tensors), bw)


def tile_rows(a, n: int):
    """Repeat a (1, d) row tensor into (n, d)."""
    a = _wrap(a)
    out_data = np.repeat(a.data, n, axis=0)

    def bw(g):
        a._accum(g.sum(axis=0, keepdims=True))

    return _make(out_data, (a,), bw)


# -- fused ops (hand-derived backwards, checked by finite differences) ------


def softmax(scores: Tensor, axis: int, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax along ``axis``, optionally restricted to a boolean mask.

    Off-mask entries come out exactly zero and receive no gradient.
    """
    a = _wrap(scores)
    z = a.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        a._accum(out_data * (g - dot))

    return _make(out_data, (a,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization over the feature dimension, scaled and shifted."""
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    d = x.data.shape[1]
    mean = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    out_data = xhat * gamma.data + beta.data

    def bw(g):
        gg = g * gamma.data
        term = gg - gg.mean(axis=1, keepdims=True) - xhat * (gg * xhat).mean(axis=1, keepdims=True)
        x._accum(term * inv)
        gamma._accum((g * xhat).sum(axis=0, keepdims=True))
        beta._accum(g.sum(axis=0, keepdims=True))

    return _make(out_data, (x, gamma, beta), bw)


def backward(loss: Tensor) -> None:
    """Accumulate gradients of ``loss`` (a scalar) into the tape's leaves."""
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and (p._backward is not None or p.requires_grad):
                stack.append((p, False))
    loss._accum(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
