"""Ground-truth values by exhaustive search.

Two independent routes to the optimal value: the unit-step minimax
recursion over afterstates and the direct set-enumeration over all
(vaccinate, attack, protect) subset triples. Their agreement is the
library's core correctness check. Intended for small instances
(|V| <= ~14, total budget <= ~5).

Internally states are bitmasks over the root graph's nodes, which makes
the cascade a handful of integer ORs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional

import numpy as np

from .game import (
    SKIP,
    Action,
    BudgetTuple,
    GameState,
    MoveSets,
    Phase,
    Player,
    StageKey,
    current_player,
    legal_actions,
    next_state,
    score_full_game,
    stage_of,
    terminal_score,
)
from .graph import Graph

_WEIGHT_TABLE_MAX_N = 16


@dataclass(frozen=True)
class OracleResult:
    """Exact value of a state plus the per-action landscape at its root."""

    value: int
    action_values: dict[int, int] = field(default_factory=dict)
    principal_variation: tuple[Action, ...] = ()


class _MaskContext:
    """Bitmask view of one root graph: successor masks and weight sums."""

    def __init__(self, g: Graph):
        if g.n > 62:
            raise ValueError("oracle supports at most 62 nodes")
        self.graph = g
        self.nodes = g.nodes
        self.n = g.n
        self.full = (1 << g.n) - 1
        self.weights = list(g.weights)
        indptr, indices = g.successors_csr()
        self.succ = [0] * g.n
        for i in range(g.n):
            m = 0
            for j in indices[indptr[i] : indptr[i + 1]]:
                m |= 1 << int(j)
            self.succ[i] = m
        self._wtable = None
        if g.n <= _WEIGHT_TABLE_MAX_N:
            table = np.zeros(1 << g.n, dtype=np.int64)
            for i, w in enumerate(self.weights):
                bit = 1 << i
                table[bit:] += np.where(
                    (np.arange(bit, 1 << g.n) & bit) != 0, w, 0
                )
            self._wtable = table
        self.memo: dict[tuple[int, int, int, int, int], int] = {}

    def wsum(self, mask: int) -> int:
        if self._wtable is not None:
            return int(self._wtable[mask])
        total = 0
        m = mask
        while m:
            b = m & -m
            total += self.weights[b.bit_length() - 1]
            m ^= b
        return total

    def mask_of(self, nodes: Iterable[int]) -> int:
        idx = self.graph.index_of
        m = 0
        for v in nodes:
            m |= 1 << idx(v)
        return m

    def nodes_of(self, mask: int) -> list[int]:
        out = []
        m = mask
        while m:
            b = m & -m
            out.append(self.nodes[b.bit_length() - 1])
            m ^= b
        return out

    def reach(self, alive: int, sources: int) -> int:
        reached = sources & alive
        frontier = reached
        succ = self.succ
        while frontier:
            nxt = 0
            m = frontier
            while m:
                b = m & -m
                nxt |= succ[b.bit_length() - 1]
                m ^= b
            nxt &= alive & ~reached
            reached |= nxt
            frontier = nxt
        return reached

    def saved(self, alive: int, attacked: int) -> int:
        return self.wsum(alive & ~self.reach(alive, attacked))

    # -- unit-step minimax over (alive, attacked, budgets) ----------------

    def actions_mask(self, alive: int, attacked: int, omega: int, phi: int, lam: int) -> int:
        if omega > 0:
            return alive
        if phi > 0 or lam > 0:
            return alive & ~attacked
        return 0

    def step(self, alive, attacked, omega, phi, lam, bit):
        """Apply the unit action at ``bit``; returns (state..., reward)."""
        if omega > 0:
            return alive & ~bit, attacked & alive & ~bit, omega - 1, phi, lam, self.wsum(bit)
        if phi > 0:
            return alive, attacked | bit, 0, phi - 1, lam, 0
        return alive & ~bit, attacked, 0, 0, lam - 1, self.wsum(bit)

    def skip(self, alive, attacked, omega, phi, lam):
        if omega > 0:
            return alive, attacked, 0, phi, lam
        if phi > 0:
            return alive, attacked, 0, 0, lam
        return alive, attacked, 0, 0, 0

    def value(self, alive, attacked, omega, phi, lam, memo: bool = True) -> int:
        if omega == 0 and phi == 0 and lam == 0:
            return self.saved(alive, attacked)
        key = (alive, attacked, omega, phi, lam)
        if memo:
            cached = self.memo.get(key)
            if cached is not None:
                return cached
        acts = self.actions_mask(alive, attacked, omega, phi, lam)
        if acts == 0:
            val = self.value(*self.skip(alive, attacked, omega, phi, lam), memo=memo)
        else:
            maximize = phi == 0 or omega > 0
            best = None
            m = acts
            while m:
                bit = m & -m
                m ^= bit
                *child, reward = self.step(alive, attacked, omega, phi, lam, bit)
                q = reward + self.value(*child, memo=memo)
                if best is None or (q > best if maximize else q < best):
                    best = q
            val = best
        if memo:
            self.memo[key] = val
        return val


def _state_parts(s: GameState) -> tuple[_MaskContext, int, int, int, int, int]:
    ctx = _MaskContext(s.graph)
    b = s.budgets
    return ctx, ctx.full, ctx.mask_of(s.attacked), b.omega, b.phi, b.lambda_


def minimax_value(s: GameState, memo: bool = True) -> OracleResult:
    """Exact optimal value of a state under alternating optimal play.

    ``action_values`` maps each legal root action to its immediate reward
    plus the optimal afterstate value; the principal variation replays
    through the game environment to exactly ``value`` (ties broken by
    lowest node id, skips recorded as ``None``).
    """
    ctx, alive, attacked, omega, phi, lam = _state_parts(s)
    value = ctx.value(alive, attacked, omega, phi, lam, memo=memo)

    action_values: dict[int, int] = {}
    if current_player(s) is not Player.TERMINAL:
        acts = ctx.actions_mask(alive, attacked, omega, phi, lam)
        m = acts
        while m:
            bit = m & -m
            m ^= bit
            *child, reward = ctx.step(alive, attacked, omega, phi, lam, bit)
            q = reward + ctx.value(*child, memo=memo)
            action_values[ctx.nodes[bit.bit_length() - 1]] = q

    pv: list[Action] = []
    cur = (alive, attacked, omega, phi, lam)
    while cur[2] or cur[3] or cur[4]:
        alive_, attacked_, om_, ph_, la_ = cur
        acts = ctx.actions_mask(alive_, attacked_, om_, ph_, la_)
        if acts == 0:
            pv.append(SKIP)
            cur = ctx.skip(alive_, attacked_, om_, ph_, la_)
            continue
        maximize = ph_ == 0 or om_ > 0
        best_bit, best_q, best_child = None, None, None
        m = acts
        while m:
            bit = m & -m
            m ^= bit
            *child, reward = ctx.step(alive_, attacked_, om_, ph_, la_, bit)
            q = reward + ctx.value(*child, memo=memo)
            if best_q is None or (q > best_q if maximize else q < best_q):
                best_bit, best_q, best_child = bit, q, child
        pv.append(ctx.nodes[best_bit.bit_length() - 1])
        cur = tuple(best_child)

    return OracleResult(int(value), action_values, tuple(pv))


def set_enumeration_value(g: Graph, budgets: BudgetTuple) -> int:
    """max over D, min over I, max over P of the whole-game score.

    Enumerates subsets of every cardinality up to each budget (the budget
    bounds are honoured as "at most").
    """
    ctx = _MaskContext(g)
    all_bits = [1 << i for i in range(ctx.n)]

    def subsets(bits: list[int], limit: int):
        for size in range(min(limit, len(bits)) + 1):
            for combo in combinations(bits, size):
                m = 0
                for b in combo:
                    m |= b
                yield m

    best_d = None
    for d_mask in subsets(all_bits, budgets.omega):
        rest_after_d = [b for b in all_bits if not b & d_mask]
        worst_i = None
        for i_mask in subsets(rest_after_d, budgets.phi):
            rest_after_i = [b for b in rest_after_d if not b & i_mask]
            best_p = None
            for p_mask in subsets(rest_after_i, budgets.lambda_):
                alive = ctx.full & ~(d_mask | p_mask)
                score = ctx.wsum(d_mask | p_mask) + ctx.saved(alive, i_mask)
                if best_p is None or score > best_p:
                    best_p = score
            if worst_i is None or best_p < worst_i:
                worst_i = best_p
        if best_d is None or worst_i > best_d:
            best_d = worst_i
    return int(best_d)


def random_policy_value(
    s: GameState, episodes: int, seed: Optional[int] = None, rng=None
) -> float:
    """Mean episode value under uniform-random play by both players."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    ctx, alive0, attacked0, om0, ph0, la0 = _state_parts(s)
    total = 0
    for _ in range(episodes):
        alive, attacked, om, ph, la = alive0, attacked0, om0, ph0, la0
        gained = 0
        while om or ph or la:
            acts = ctx.actions_mask(alive, attacked, om, ph, la)
            if acts == 0:
                alive, attacked, om, ph, la = ctx.skip(alive, attacked, om, ph, la)
                continue
            bits = []
            m = acts
            while m:
                b = m & -m
                bits.append(b)
                m ^= b
            bit = bits[int(rng.integers(len(bits)))]
            alive, attacked, om, ph, la, reward = ctx.step(alive, attacked, om, ph, la, bit)
            gained += reward
        total += gained + ctx.saved(alive, attacked)
    return total / episodes


def _rebuild_state(root: Graph, ctx: _MaskContext, alive, attacked, om, ph, la) -> GameState:
    alive_nodes = ctx.nodes_of(alive)
    keep = set(alive_nodes)
    sub = Graph(
        alive_nodes,
        [root.weight_of(v) for v in alive_nodes],
        [(u, v) for u, v in root.arcs if u in keep and v in keep],
        directed=root.directed,
    )
    return GameState(sub, BudgetTuple(om, ph, la), frozenset(ctx.nodes_of(attacked & alive)))


def _stage_tuple(om: int, ph: int, la: int) -> Optional[tuple[int, int]]:
    if om > 0:
        return (Phase.VACCINATION.value, om)
    if ph > 0:
        return (Phase.ATTACK.value, ph)
    if la > 0:
        return (Phase.PROTECTION.value, la)
    return None


def _collect_states(
    s0: GameState, target: StageKey, optimal_only: bool, memo: bool = True
) -> set[GameState]:
    ctx, alive, attacked, om, ph, la = _state_parts(s0)
    want = (target.phase.value, target.remaining)
    seen: set[tuple] = set()
    out: set[GameState] = set()
    stack = [(alive, attacked, om, ph, la)]
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        alive_, attacked_, om_, ph_, la_ = cur
        stage = _stage_tuple(om_, ph_, la_)
        if stage == want:
            out.add(_rebuild_state(s0.graph, ctx, *cur))
            continue
        if stage is None or stage < want:
            continue
        acts = ctx.actions_mask(alive_, attacked_, om_, ph_, la_)
        if acts == 0:
            stack.append(ctx.skip(alive_, attacked_, om_, ph_, la_))
            continue
        chosen = []
        maximize = ph_ == 0 or om_ > 0
        best = None
        m = acts
        while m:
            bit = m & -m
            m ^= bit
            *child, reward = ctx.step(alive_, attacked_, om_, ph_, la_, bit)
            if optimal_only:
                q = reward + ctx.value(*child, memo=memo)
                if best is None or (q > best if maximize else q < best):
                    best = q
                    chosen = [tuple(child)]
                elif q == best:
                    chosen.append(tuple(child))
            else:
                chosen.append(tuple(child))
        stack.extend(chosen)
    return out


def exhaustive_random_support(s0: GameState, target_stage: StageKey) -> set[GameState]:
    """All states at ``target_stage`` reachable by any legal action sequence.

    This is the support of the random-rollback proxy distribution restricted
    to instances starting at ``s0``. Only for tiny instances.
    """
    return _collect_states(s0, target_stage, optimal_only=False)


def optimal_play_states(s0: GameState, target_stage: StageKey) -> set[GameState]:
    """States at ``target_stage`` reachable when every prior move is optimal.

    Every optimal action at each step is branched on, so the result covers
    all optimal lines, not just the tie-broken principal variation.
    """
    return _collect_states(s0, target_stage, optimal_only=True)
