"""Weighted game graphs: construction, random instances, cascades, features.

Graphs are immutable: every operation returns a new ``Graph``. Node labels
are arbitrary non-negative ints and survive node removal, so a subgraph
remembers which original nodes it contains.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels

Arc = tuple[int, int]


class Graph:
    """Immutable node-weighted graph, optionally directed.

    Invariants enforced at construction: no self-loops, no duplicate arcs,
    arc endpoints must be present nodes, weights >= 1. Undirected arcs are
    stored once in canonical (low, high) order and treated symmetrically.
    """

    __slots__ = (
        "nodes",
        "weights",
        "arcs",
        "directed",
        "_index",
        "_succ",
        "_sym",
        "_weight_arr",
        "_total_weight",
        "_ldp",
        "_nn_cache",
        "_key",
        "_hash",
    )

    def __init__(
        self,
        nodes: Iterable[int],
        weights: Iterable[int],
        arcs: Iterable[Arc],
        directed: bool = False,
    ):
        raw_nodes = [int(v) for v in nodes]
        node_list = sorted(raw_nodes)
        if len(set(node_list)) != len(node_list):
            raise ValueError("duplicate node ids")
        weights = [int(w) for w in weights]
        if len(weights) != len(raw_nodes):
            raise ValueError("weights must align with nodes")
        by_node = dict(zip(raw_nodes, weights))
        self.nodes = tuple(node_list)
        self.weights = tuple(by_node[v] for v in node_list)
        if any(w < 1 for w in self.weights):
            raise ValueError("all weights must be >= 1")
        self.directed = bool(directed)

        node_set = set(node_list)
        canon = []
        for u, v in arcs:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            if u not in node_set or v not in node_set:
                raise ValueError(f"arc ({u},{v}) references a missing node")
            if not self.directed and u > v:
                u, v = v, u
            canon.append((u, v))
        if len(set(canon)) != len(canon):
            raise ValueError("duplicate arcs")
        self.arcs = tuple(sorted(canon))

        self._index = {v: i for i, v in enumerate(self.nodes)}
        self._succ = self._build_csr(symmetric=not self.directed)
        self._sym = self._succ if not self.directed else self._build_csr(symmetric=True)
        self._weight_arr = np.asarray(self.weights, dtype=np.int64)
        self._total_weight = int(self._weight_arr.sum())
        self._ldp = None
        self._nn_cache = None
        self._key = (self.nodes, self.weights, self.arcs, self.directed)
        self._hash = hash(self._key)

    def _build_csr(self, symmetric: bool):
        n = len(self.nodes)
        neigh: list[list[int]] = [[] for _ in range(n)]
        for u, v in self.arcs:
            iu, iv = self._index[u], self._index[v]
            neigh[iu].append(iv)
            if symmetric:
                neigh[iv].append(iu)
        indptr = np.zeros(n + 1, dtype=np.int32)
        for i, ns in enumerate(neigh):
            indptr[i + 1] = indptr[i] + len(ns)
        indices = np.empty(int(indptr[-1]), dtype=np.int32)
        for i, ns in enumerate(neigh):
            indices[indptr[i] : indptr[i + 1]] = sorted(ns)
        return indptr, indices

    # -- basic accessors -------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def total_weight(self) -> int:
        return self._total_weight

    @property
    def key(self):
        """Exact serialization key (nodes, weights, sorted arcs, directed)."""
        return self._key

    def weight_of(self, v: int) -> int:
        return self.weights[self._index[v]]

    def index_of(self, v: int) -> int:
        return self._index[v]

    def has_node(self, v: int) -> bool:
        return v in self._index

    def successors_csr(self):
        """CSR adjacency following arc direction (symmetric if undirected)."""
        return self._succ

    def symmetric_csr(self):
        """CSR adjacency over the undirected skeleton (in + out neighbours)."""
        return self._sym

    def weight_array(self) -> np.ndarray:
        return self._weight_arr

    def __eq__(self, other):
        return isinstance(other, Graph) and self._key == other._key

    def __hash__(self):
        return self._hash

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"Graph(n={self.n}, arcs={len(self.arcs)}, {kind})"


def generate_graph(
    n: int,
    density_range: Sequence[float],
    directed: bool = False,
    weight_range: Sequence[int] = (1, 1),
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    require_arcs: bool = False,
) -> Graph:
    """Sample a uniform random graph with an arc count drawn from a density window.

    The arc count is uniform on [ceil(d_min*M), floor(d_max*M)] where M is
    n(n-1) for directed graphs and n(n-1)/2 for undirected ones; arcs are
    then sampled uniformly without replacement. Node weights are uniform
    integers in ``weight_range``. Deterministic given ``seed``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    d_min, d_max = float(density_range[0]), float(density_range[1])
    if not (0.0 <= d_min <= d_max <= 1.0):
        raise ValueError("density range must satisfy 0 <= d_min <= d_max <= 1")
    w_min, w_max = int(weight_range[0]), int(weight_range[1])
    if w_min < 1 or w_min > w_max:
        raise ValueError("weight range must satisfy 1 <= w_min <= w_max")
    if rng is None:
        rng = np.random.default_rng(seed)

    m_possible = n * (n - 1) if directed else n * (n - 1) // 2
    lo = int(np.ceil(d_min * m_possible))
    hi = int(np.floor(d_max * m_possible))
    if require_arcs and n >= 2 and hi < 1:
        raise ValueError("density range admits no arcs but require_arcs is set")
    if lo > hi:
        raise ValueError(f"empty arc-count interval [{lo}, {hi}]")

    if directed:
        pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    else:
        pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    count = int(rng.integers(lo, hi + 1)) if hi > 0 else lo
    if count > 0:
        chosen_idx = rng.choice(len(pairs), size=count, replace=False)
        arcs = [pairs[i] for i in sorted(int(i) for i in chosen_idx)]
    else:
        arcs = []
    weights = rng.integers(w_min, w_max + 1, size=n)
    return Graph(range(n), [int(w) for w in weights], arcs, directed=directed)


def remove_node(g: Graph, v: int) -> Graph:
    """Return ``g`` without node ``v`` and all arcs incident to it."""
    if not g.has_node(v):
        raise KeyError(f"node {v} not in graph")
    keep = [u for u in g.nodes if u != v]
    weights = [g.weight_of(u) for u in keep]
    arcs = [(a, b) for a, b in g.arcs if a != v and b != v]
    return Graph(keep, weights, arcs, directed=g.directed)


def reachable_from(g: Graph, sources: Iterable[int]) -> frozenset[int]:
    """Nodes reachable from ``sources`` following arcs (cascade closure).

    Arc direction is respected for directed graphs; undirected arcs carry
    in both directions. The sources themselves are included.
    """
    src = [g.index_of(v) for v in sources]
    if not src:
        return frozenset()
    indptr, indices = g.successors_csr()
    seeds = np.asarray(src, dtype=np.int32)
    visited = _kernels.reachable_mask(indptr, indices, g.n, seeds)
    return frozenset(g.nodes[i] for i in range(g.n) if visited[i])


def local_degree_profile(g: Graph) -> np.ndarray:
    """Per-node (degree, min, max, mean, std) over neighbour degrees.

    Rows align with ``g.nodes``. For directed graphs the degree counts both
    in- and out-neighbours and the neighbour set is their union. Cached on
    the graph.
    """
    if g._ldp is None:
        indptr, indices = g.symmetric_csr()
        g._ldp = _kernels.ldp(indptr, indices, g.n)
        g._ldp.flags.writeable = False
    return g._ldp
