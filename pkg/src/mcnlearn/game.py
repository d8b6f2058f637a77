"""The vaccinate/attack/protect game in unit-step form.

Three phases play out on a graph: the defender removes (vaccinates) nodes,
the attacker marks nodes as infected, the defender removes (protects) more
nodes. Infection then cascades along arcs and the defender's score is the
total weight of nodes never reached, plus the weights collected when
removing nodes. Each step spends exactly one budget unit; a phase whose
action set is empty is forfeited via a distinguished skip transition.

States are immutable values; all transitions return new states.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from . import _kernels
from .graph import Graph, reachable_from, remove_node

import numpy as np

# A unit action is a node id; None is the skip transition, legal only when
# the current phase has no actions left.
Action = Optional[int]
SKIP: Action = None


class Player(enum.Enum):
    DEFENDER = "defender"
    ATTACKER = "attacker"
    TERMINAL = "terminal"


class Phase(enum.IntEnum):
    """Game phases in bottom-up order (later phases sort lower)."""

    PROTECTION = 0
    ATTACK = 1
    VACCINATION = 2


class StageKey(tuple):
    """(phase, remaining-budget) pair identifying a curriculum stage."""

    __slots__ = ()

    def __new__(cls, phase: Phase, remaining: int):
        if remaining < 1:
            raise ValueError("stage budget must be >= 1")
        return super().__new__(cls, (Phase(phase), int(remaining)))

    @property
    def phase(self) -> Phase:
        return self[0]

    @property
    def remaining(self) -> int:
        return self[1]

    def __repr__(self):
        return f"StageKey({self.phase.name}, {self.remaining})"

    def label(self) -> str:
        return f"{self.phase.name[0]}{self.remaining}"

    @classmethod
    def from_label(cls, text: str) -> "StageKey":
        prefix = {"P": Phase.PROTECTION, "A": Phase.ATTACK, "V": Phase.VACCINATION}
        try:
            return cls(prefix[text[0].upper()], int(text[1:]))
        except (KeyError, ValueError, IndexError):
            raise ValueError(f"bad stage label {text!r}") from None


@dataclass(frozen=True)
class BudgetTuple:
    """Remaining units per phase: vaccination, attack, protection."""

    omega: int
    phi: int
    lambda_: int

    def __post_init__(self):
        if min(self.omega, self.phi, self.lambda_) < 0:
            raise ValueError("budgets must be non-negative")

    @property
    def total(self) -> int:
        return self.omega + self.phi + self.lambda_

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.omega, self.phi, self.lambda_)


@dataclass(frozen=True)
class GameState:
    """A graph, the remaining budgets, and the set of attacked nodes."""

    graph: Graph
    budgets: BudgetTuple
    attacked: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "attacked", frozenset(self.attacked))
        for v in self.attacked:
            if not self.graph.has_node(v):
                raise ValueError(f"attacked node {v} not in graph")

    @property
    def key(self):
        return (self.graph.key, self.budgets.as_tuple(), tuple(sorted(self.attacked)))

    def __hash__(self):
        return hash(self.key)

    def __eq__(self, other):
        return isinstance(other, GameState) and self.key == other.key


@dataclass(frozen=True)
class MoveSets:
    """Accumulated whole-game moves: vaccinated D, attacked I, protected P."""

    D: frozenset[int] = field(default_factory=frozenset)
    I: frozenset[int] = field(default_factory=frozenset)
    P: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "D", frozenset(self.D))
        object.__setattr__(self, "I", frozenset(self.I))
        object.__setattr__(self, "P", frozenset(self.P))
        if self.D & self.I or self.D & self.P or self.I & self.P:
            raise ValueError("move sets must be pairwise disjoint")


def current_player(s: GameState) -> Player:
    """Whose turn it is: defender (vaccination), attacker, defender (protection)."""
    if s.budgets.omega > 0:
        return Player.DEFENDER
    if s.budgets.phi > 0:
        return Player.ATTACKER
    if s.budgets.lambda_ > 0:
        return Player.DEFENDER
    return Player.TERMINAL


def phase_of(s: GameState) -> Optional[Phase]:
    if s.budgets.omega > 0:
        return Phase.VACCINATION
    if s.budgets.phi > 0:
        return Phase.ATTACK
    if s.budgets.lambda_ > 0:
        return Phase.PROTECTION
    return None


def stage_of(s: GameState) -> Optional[StageKey]:
    """The (phase, remaining) stage of a state, or None if terminal."""
    p = phase_of(s)
    if p is None:
        return None
    remaining = {
        Phase.VACCINATION: s.budgets.omega,
        Phase.ATTACK: s.budgets.phi,
        Phase.PROTECTION: s.budgets.lambda_,
    }[p]
    return StageKey(p, remaining)


def legal_actions(s: GameState) -> tuple[int, ...]:
    """Node ids playable in the current phase, sorted ascending.

    Vaccination: every node still in the graph. Attack and protection:
    every node not already attacked. May be empty (see the skip rule).
    """
    p = phase_of(s)
    if p is None:
        raise ValueError("terminal state has no actions")
    if p is Phase.VACCINATION:
        return s.graph.nodes
    return tuple(v for v in s.graph.nodes if v not in s.attacked)


def next_state(s: GameState, action: Action) -> tuple[GameState, int]:
    """Apply one unit action; returns (new state, immediate reward).

    Vaccination and protection remove the node and pay its weight; attack
    marks the node and pays nothing. ``action=None`` is the skip move: it
    is legal only when the phase has no actions and zeroes the remaining
    budget of that phase with reward 0.
    """
    p = phase_of(s)
    if p is None:
        raise ValueError("cannot act in a terminal state")
    acts = legal_actions(s)
    b = s.budgets
    if action is SKIP:
        if acts:
            raise ValueError("skip is only legal when no actions are available")
        zeroed = {
            Phase.VACCINATION: BudgetTuple(0, b.phi, b.lambda_),
            Phase.ATTACK: BudgetTuple(0, 0, b.lambda_),
            Phase.PROTECTION: BudgetTuple(0, 0, 0),
        }[p]
        return GameState(s.graph, zeroed, s.attacked), 0
    if action not in acts:
        raise ValueError(f"illegal action {action} in phase {p.name}")

    if p is Phase.ATTACK:
        return (
            GameState(s.graph, BudgetTuple(0, b.phi - 1, b.lambda_), s.attacked | {action}),
            0,
        )
    reward = s.graph.weight_of(action)
    g2 = remove_node(s.graph, action)
    attacked = frozenset(v for v in s.attacked if g2.has_node(v))
    if p is Phase.VACCINATION:
        return GameState(g2, BudgetTuple(b.omega - 1, b.phi, b.lambda_), attacked), reward
    return GameState(g2, BudgetTuple(0, 0, b.lambda_ - 1), attacked), reward


def terminal_score(s: GameState) -> int:
    """Weight of nodes not reachable from the attacked set.

    Defined on every state ("score if the game stopped now"); on terminal
    states it is the end-of-game saved weight.
    """
    g = s.graph
    if not s.attacked:
        return g.total_weight
    indptr, indices = g.successors_csr()
    seeds = np.asarray([g.index_of(v) for v in s.attacked], dtype=np.int32)
    return int(_kernels.saved_weight(indptr, indices, g.n, g.weight_array(), seeds))


def score_full_game(g: Graph, moves: MoveSets) -> int:
    """Whole-game score of move sets on the original graph (set form).

    Equals w(D) + w(P) plus the weight of the nodes outside D and P that
    the infection never reaches once D and P are deleted.
    """
    for v in moves.D | moves.I | moves.P:
        if not g.has_node(v):
            raise ValueError(f"move on missing node {v}")
    reduced = g
    for v in sorted(moves.D | moves.P):
        reduced = remove_node(reduced, v)
    infected = reachable_from(reduced, moves.I)
    saved = sum(reduced.weight_of(v) for v in reduced.nodes if v not in infected)
    removed_reward = sum(g.weight_of(v) for v in moves.D | moves.P)
    return removed_reward + saved


def initial_state(g: Graph, omega: int, phi: int, lambda_: int) -> GameState:
    return GameState(g, BudgetTuple(omega, phi, lambda_), frozenset())


def settle_skips(s: GameState) -> GameState:
    """Apply forced skip transitions until actions exist or the game ends."""
    while current_player(s) is not Player.TERMINAL and not legal_actions(s):
        s, _ = next_state(s, SKIP)
    return s


def run_episode(
    s: GameState, choose: Callable[[GameState, tuple[int, ...]], Action]
) -> tuple[list[int], MoveSets, GameState, list[Action]]:
    """Play a full episode with ``choose`` picking among legal actions.

    Returns (per-step rewards, accumulated move sets, final state, actions
    taken). Skip transitions are taken automatically when forced and appear
    as ``None`` entries.
    """
    rewards: list[int] = []
    actions: list[Action] = []
    D: set[int] = set()
    I: set[int] = set()
    P: set[int] = set()
    while current_player(s) is not Player.TERMINAL:
        acts = legal_actions(s)
        a = choose(s, acts) if acts else SKIP
        p = phase_of(s)
        s, r = next_state(s, a)
        rewards.append(r)
        actions.append(a)
        if a is not SKIP:
            {Phase.VACCINATION: D, Phase.ATTACK: I, Phase.PROTECTION: P}[p].add(a)
    return rewards, MoveSets(frozenset(D), frozenset(I), frozenset(P)), s, actions
