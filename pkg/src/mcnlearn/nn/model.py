"""Graph value estimator: featurization, attention, propagation, pooling.

Pipeline per state: 7 node features -> linear projection -> ``n_a``
multi-head attention blocks -> personalized-propagation smoothing ->
gated pooling into a graph vector -> context vector with budgets ->
per-node head. The value head emits a save probability per node and
V = sum(p_v * w_v); the Q head emits a non-negative score per node with
illegal actions masked out.

Batch normalization from the reference architecture is replaced by
per-sample layer normalization so that outputs are a pure function of one
state (see README); a config flag can disable normalization entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Optional

import numpy as np

from ..game import GameState, Player, current_player, legal_actions
from ..graph import Graph, local_degree_profile
from . import autodiff as ad
from .autodiff import Tensor

N_RAW_FEATURES = 7
N_CONTEXT_EXTRAS = 8
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and knobs of the value network."""

    d_e: int = 32
    d_h: int = 64
    d_v: int = 16
    n_a: int = 2
    n_h: int = 2
    n_p: int = 2
    alpha: float = 0.2
    K: int = 12
    dropout_p: float = 0.2
    precision: str = "float64"
    normalization: str = "layer"

    def __post_init__(self):
        if min(self.d_e, self.d_h, self.d_v, self.n_a, self.n_h, self.n_p) < 1:
            raise ValueError("all dimensions must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")
        if self.normalization not in ("layer", "none"):
            raise ValueError("normalization must be 'layer' or 'none'")

    @property
    def dtype(self):
        return np.float64 if self.precision == "float64" else np.float32

    @classmethod
    def desk(cls, K: int = 12, **overrides) -> "ModelConfig":
        """Small configuration for CPU-scale experiments."""
        return cls(K=K, **overrides)

    @classmethod
    def paper_preset(cls, K: int = 23, **overrides) -> "ModelConfig":
        """The full-scale configuration reported for the reference runs."""
        base = cls(
            d_e=200, d_h=400, d_v=100, n_a=7, n_h=3, n_p=3, alpha=0.2,
            K=K, dropout_p=0.2,
        )
        return replace(base, **overrides) if overrides else base

    def with_K(self, K: int) -> "ModelConfig":
        return replace(self, K=K)


def param_layout(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...], int]]:
    """Ordered (name, shape, fan_in) for every parameter tensor."""
    d_e, d_h, d_v = cfg.d_e, cfg.d_h, cfg.d_v
    out: list[tuple[str, tuple[int, ...], int]] = []

    def lin(prefix, fan_in, fan_out):
        out.append((f"{prefix}.W", (fan_in, fan_out), fan_in))
        out.append((f"{prefix}.b", (1, fan_out), fan_in))

    def norm(prefix, dim):
        if cfg.normalization == "layer":
            out.append((f"{prefix}.g", (1, dim), 0))
            out.append((f"{prefix}.bt", (1, dim), 0))

    lin("in_proj", N_RAW_FEATURES, d_e)
    for i in range(cfg.n_a):
        for h in range(cfg.n_h):
            out.append((f"att{i}.h{h}.theta", (d_e, d_v), d_e))
            out.append((f"att{i}.h{h}.a_src", (d_v, 1), d_v))
            out.append((f"att{i}.h{h}.a_dst", (d_v, 1), d_v))
            lin(f"att{i}.h{h}.out", d_v, d_e)
        norm(f"att{i}.ln1", d_e)
        lin(f"att{i}.ff1", d_e, d_h)
        lin(f"att{i}.ff2", d_h, d_e)
        norm(f"att{i}.ln2", d_e)
    for j in range(cfg.n_p):
        lin(f"pool{j}.gate1", d_e + 2, d_h)
        lin(f"pool{j}.gate2", d_h, 1)
        lin(f"pool{j}.r1", d_e + 2, d_h)
        lin(f"pool{j}.r2", d_h, d_e)
    head_in = d_e + cfg.n_p * d_e + N_CONTEXT_EXTRAS
    lin("head.l1", head_in, d_h)
    norm("head.ln1", d_h)
    lin("head.l2", d_h, d_e)
    norm("head.ln2", d_e)
    lin("head.l3", d_e, 1)
    return out


def param_count(cfg: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape, _ in param_layout(cfg))


class ValueNetwork:
    """Flat parameter vector plus its interpretation.

    ``kind`` selects the output head: "value" (sigmoid save probabilities,
    V = sum p_v w_v) or "q" (non-negative per-action scores). Frozen
    networks have a read-only parameter array.
    """

    def __init__(self, config: ModelConfig, theta: np.ndarray, kind: str = "value"):
        if kind not in ("value", "q"):
            raise ValueError("kind must be 'value' or 'q'")
        expected = param_count(config)
        if theta.shape != (expected,):
            raise ValueError(f"theta must have shape ({expected},), got {theta.shape}")
        self.config = config
        self.kind = kind
        self.theta = theta
        self._offsets: dict[str, tuple[int, tuple[int, ...]]] = {}
        off = 0
        for name, shape, _ in param_layout(config):
            self._offsets[name] = (off, shape)
            off += int(np.prod(shape))

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0, kind: str = "value") -> "ValueNetwork":
        """Fresh parameters: uniform +-1/sqrt(fan_in), norm scales at 1."""
        rng = np.random.default_rng(seed)
        chunks = []
        for name, shape, fan_in in param_layout(config):
            size = int(np.prod(shape))
            if fan_in == 0:
                vals = np.ones(size) if name.endswith(".g") else np.zeros(size)
            else:
                bound = 1.0 / np.sqrt(fan_in)
                vals = rng.uniform(-bound, bound, size=size)
            chunks.append(vals)
        theta = np.concatenate(chunks).astype(config.dtype)
        return cls(config, theta, kind=kind)

    def view(self, name: str) -> np.ndarray:
        off, shape = self._offsets[name]
        return self.theta[off : off + int(np.prod(shape))].reshape(shape)

    def leaves(self, grad_buf: Optional[np.ndarray] = None) -> dict[str, Tensor]:
        """Parameter tensors viewing the flat vector (and grad buffer)."""
        out = {}
        for name, (off, shape) in self._offsets.items():
            size = int(np.prod(shape))
            t = Tensor(self.theta[off : off + size].reshape(shape), requires_grad=True)
            if grad_buf is not None:
                t.grad = grad_buf[off : off + size].reshape(shape)
            out[name] = t
        return out

    @property
    def frozen(self) -> bool:
        return not self.theta.flags.writeable

    def copy(self, frozen: bool = False) -> "ValueNetwork":
        theta = self.theta.copy()
        if frozen:
            theta.flags.writeable = False
        return ValueNetwork(self.config, theta, kind=self.kind)

    def __eq__(self, other):
        return (
            isinstance(other, ValueNetwork)
            and self.config == other.config
            and self.kind == other.kind
            and np.array_equal(self.theta, other.theta)
        )


# -- static per-graph structures -------------------------------------------


def _nn_static(g: Graph) -> dict:
    """Attention mask and propagation matrix, cached on the graph.

    Messages flow along arc direction: node v attends to its in-neighbours
    (plus itself), and the propagation matrix row of v aggregates from the
    same set, normalized symmetrically by sqrt(in-degree + 1).
    """
    if g._nn_cache is None:
        n = g.n
        att = np.eye(n, dtype=bool)
        for u, v in g.arcs:
            iu, iv = g.index_of(u), g.index_of(v)
            att[iv, iu] = True
            if not g.directed:
                att[iu, iv] = True
        a_hat = att.astype(np.float64)
        deg = a_hat.sum(axis=1)
        inv_sqrt = 1.0 / np.sqrt(deg)
        prop = a_hat * inv_sqrt[:, None] * inv_sqrt[None, :]
        g._nn_cache = {"att_mask": att, "prop": prop}
    return g._nn_cache


def node_features(s: GameState) -> np.ndarray:
    """(n, 7) matrix: normalized weight, attacked flag, degree profile."""
    g = s.graph
    if g.n == 0:
        return np.zeros((0, N_RAW_FEATURES))
    feats = np.zeros((g.n, N_RAW_FEATURES))
    feats[:, 0] = g.weight_array() / g.total_weight
    for v in s.attacked:
        feats[g.index_of(v), 1] = 1.0
    feats[:, 2:] = local_degree_profile(g)
    return feats


# -- forward stages ---------------------------------------------------------


def _linear(x: Tensor, params: Mapping[str, Tensor], prefix: str) -> Tensor:
    return x @ params[f"{prefix}.W"] + params[f"{prefix}.b"]


def _maybe_norm(x: Tensor, params: Mapping[str, Tensor], prefix: str, cfg: ModelConfig) -> Tensor:
    if cfg.normalization == "none":
        return x
    return ad.layer_norm(x, params[f"{prefix}.g"], params[f"{prefix}.bt"])


def attention_block(
    X: Tensor,
    g: Graph,
    params: Mapping[str, Tensor],
    cfg: ModelConfig,
    block: int = 0,
    return_weights: bool = False,
):
    """One multi-head attention block with skip connections.

    Per head: scores between a node and its (in-)neighbours are a leaky
    softmax over learned projections; head outputs are projected back to
    d_e and summed, then skip + norm, then a 2-layer feed-forward with
    skip + norm.
    """
    if X.data.shape[0] != g.n:
        raise ValueError("embedding row count must equal node count")
    mask = _nn_static(g)["att_mask"]
    p = f"att{block}"
    merged = None
    weights = []
    for h in range(cfg.n_h):
        hp = f"{p}.h{h}"
        H = X @ params[f"{hp}.theta"]
        logits = ad.leaky_relu(
            H @ params[f"{hp}.a_src"] + (H @ params[f"{hp}.a_dst"]).T, LEAKY_SLOPE
        )
        mu = ad.softmax(logits, axis=1, mask=mask)
        if return_weights:
            weights.append(mu.data.copy())
        head_out = _linear(mu @ H, params, f"{hp}.out")
        merged = head_out if merged is None else merged + head_out
    skip1 = _maybe_norm(X + merged, params, f"{p}.ln1", cfg)
    ff = _linear(ad.relu(_linear(skip1, params, f"{p}.ff1")), params, f"{p}.ff2")
    out = _maybe_norm(skip1 + ff, params, f"{p}.ln2", cfg)
    if return_weights:
        return out, weights
    return out


def appnp_propagate(X0: Tensor, g: Graph, alpha: float, K: int) -> Tensor:
    """K rounds of X <- (1-alpha) * P @ X + alpha * X0.

    The recursion is linear in X0, so the K steps fold into one constant
    operator M (cached per graph and (alpha, K)) and a single matmul.
    """
    if K == 0 or alpha == 1.0:
        return X0
    cache = _nn_static(g)
    key = ("appnp", float(alpha), int(K))
    M = cache.get(key)
    if M is None:
        P = cache["prop"]
        M = np.eye(g.n)
        for _ in range(K):
            M = (1.0 - alpha) * (P @ M) + alpha * np.eye(g.n)
        cache[key] = M
    return Tensor(M.astype(X0.data.dtype)) @ X0


def graph_pool(X_aug: Tensor, params: Mapping[str, Tensor], cfg: ModelConfig) -> Tensor:
    """Gated sum pooling, n_p independent replicas concatenated.

    ``X_aug`` is the node embedding with the raw (normalized weight,
    attacked flag) columns appended. Empty graphs pool to a zero vector.
    """
    if X_aug.data.shape[0] == 0:
        return Tensor(np.zeros((1, cfg.n_p * cfg.d_e), dtype=cfg.dtype))
    parts = []
    for j in range(cfg.n_p):
        gate = _linear(ad.relu(_linear(X_aug, params, f"pool{j}.gate1")), params, f"pool{j}.gate2")
        proj = _linear(ad.relu(_linear(X_aug, params, f"pool{j}.r1")), params, f"pool{j}.r2")
        weights = ad.softmax(gate, axis=0)
        parts.append((weights * proj).sum(axis=0, keepdims=True))
    return ad.concat(parts, axis=1)


def _dropout(x: Tensor, p: float, train: bool, rng) -> Tensor:
    if not train or p <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return x * Tensor(keep)


def _trunk(
    s: GameState,
    params: Mapping[str, Tensor],
    cfg: ModelConfig,
) -> tuple[Tensor, Tensor]:
    """Shared pipeline up to (per-node embeddings, context vector)."""
    g = s.graph
    dtype = cfg.dtype
    raw = node_features(s).astype(dtype)
    X = _linear(Tensor(raw), params, "in_proj")
    for i in range(cfg.n_a):
        X = attention_block(X, g, params, cfg, block=i)
    X = appnp_propagate(X, g, cfg.alpha, cfg.K)
    X_aug = ad.concat([X, Tensor(raw[:, :2])], axis=1)
    r = graph_pool(X_aug, params, cfg)
    b = s.budgets
    n = g.n
    extras = np.array(
        [[n, b.omega, b.phi, b.lambda_, b.omega / n, b.phi / n, b.lambda_ / n, g.total_weight]],
        dtype=dtype,
    )
    context = ad.concat([r, Tensor(extras)], axis=1)
    return X, context


def _head(
    X: Tensor,
    context: Tensor,
    params: Mapping[str, Tensor],
    cfg: ModelConfig,
    train: bool,
    rng,
) -> Tensor:
    n = X.data.shape[0]
    inp = ad.concat([X, ad.tile_rows(context, n)], axis=1)
    h1 = _dropout(
        ad.leaky_relu(_maybe_norm(_linear(inp, params, "head.l1"), params, "head.ln1", cfg), LEAKY_SLOPE),
        cfg.dropout_p, train, rng,
    )
    h2 = _dropout(
        ad.leaky_relu(_maybe_norm(_linear(h1, params, "head.l2"), params, "head.ln2", cfg), LEAKY_SLOPE),
        cfg.dropout_p, train, rng,
    )
    return _linear(h2, params, "head.l3")


def value_forward_tensor(
    s: GameState,
    params: Mapping[str, Tensor],
    cfg: ModelConfig,
    train: bool = False,
    rng=None,
) -> tuple[Tensor, Optional[Tensor]]:
    """Tracked forward pass; returns (V tensor, per-node probability tensor)."""
    if s.graph.n == 0:
        return Tensor(np.zeros((), dtype=cfg.dtype)), None
    X, context = _trunk(s, params, cfg)
    logits = _head(X, context, params, cfg, train, rng)
    probs = ad.sigmoid(logits)
    w_col = Tensor(s.graph.weight_array().astype(cfg.dtype).reshape(-1, 1))
    vhat = (probs * w_col).sum()
    return vhat, probs


def value_forward(
    s: GameState,
    net: ValueNetwork,
    train: bool = False,
    rng=None,
) -> tuple[float, np.ndarray]:
    """V estimate and per-node save probabilities (aligned with g.nodes).

    Eval mode (the default) is deterministic: dropout off, no tape.
    """
    if net.kind != "value":
        raise ValueError("value_forward requires a value-head network")
    with ad.no_grad():
        vhat, probs = value_forward_tensor(s, net.leaves(), net.config, train=train, rng=rng)
    if probs is None:
        return 0.0, np.zeros(0, dtype=net.config.dtype)
    return float(vhat.data), probs.data.reshape(-1)


def q_forward_tensor(
    s: GameState,
    params: Mapping[str, Tensor],
    cfg: ModelConfig,
    train: bool = False,
    rng=None,
) -> Tensor:
    """Tracked per-node Q column (before masking)."""
    X, context = _trunk(s, params, cfg)
    return ad.relu(_head(X, context, params, cfg, train, rng))


def q_forward(s: GameState, net: ValueNetwork) -> dict[int, float]:
    """Per-action values for the current phase, illegal actions removed."""
    if net.kind != "q":
        raise ValueError("q_forward requires a q-head network")
    if current_player(s) is Player.TERMINAL:
        raise ValueError("q_forward is undefined on terminal states")
    acts = legal_actions(s)
    if not acts:
        return {}
    with ad.no_grad():
        q = q_forward_tensor(s, net.leaves(), net.config)
    col = q.data.reshape(-1)
    return {v: float(col[s.graph.index_of(v)]) for v in acts}
