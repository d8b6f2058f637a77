"""Metrics and policy evaluation against exactly solved instances.

The optimality gap is the mean of |v* - v|/v* over instances with v* != 0
(excluded ones are counted); the approximation ratio is the mean of
max(v*/v, v/v*) with the doubly-zero case counted as a perfect 1 and
half-zero cases excluded.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from .curriculum import greedy_policy_value
from .game import GameState, Player, current_player, legal_actions, next_state
from .oracle import minimax_value, random_policy_value
from .seeding import derive_seed

ORACLE_TOLERANCE = 0.0
EXPERT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class MetricsReport:
    eta: float
    zeta: float
    mean_time_s: float
    n_instances: int
    n_excluded: int


def compute_metrics(
    pairs: Sequence[tuple[float, float]], mean_time_s: float = 0.0
) -> MetricsReport:
    """Aggregate (exact, heuristic) value pairs into gap and ratio."""
    if not pairs:
        raise ValueError("no value pairs to aggregate")
    gaps = []
    ratios = []
    excluded = 0
    for v_star, v_hat in pairs:
        if v_star == 0:
            excluded += 1
            if v_hat == 0:
                ratios.append(1.0)
            continue
        gaps.append(abs(v_star - v_hat) / v_star)
        if v_hat != 0:
            ratios.append(max(v_star / v_hat, v_hat / v_star))
    if not gaps:
        raise ValueError("every pair was excluded (all exact values are zero)")
    if not ratios:
        raise ValueError("every pair was excluded from the ratio")
    return MetricsReport(
        eta=sum(gaps) / len(gaps),
        zeta=sum(ratios) / len(ratios),
        mean_time_s=mean_time_s,
        n_instances=len(pairs),
        n_excluded=excluded,
    )


def oracle_policy() -> Callable[[GameState], float]:
    def run(s: GameState) -> float:
        return float(minimax_value(s).value)

    return run


def random_policy(episodes: int = 10, seed: int = 0) -> Callable[[GameState], float]:
    """Mean of ``episodes`` uniform-random episodes (10 in the reference
    protocol); per-instance seeds derive from ``seed`` and a counter."""
    counter = iter(range(10**12))

    def run(s: GameState) -> float:
        return random_policy_value(s, episodes, seed=derive_seed(seed, "inst", next(counter)))

    return run


def greedy_policy(experts) -> Callable[[GameState], float]:
    def run(s: GameState) -> float:
        return greedy_policy_value(s, experts)[0]

    return run


def evaluate_policy(
    solved: Iterable[tuple[object, GameState, float]],
    policy: Callable[[GameState], float],
) -> MetricsReport:
    """Run ``policy`` on (id, state, exact value) records and aggregate.

    Per-instance wall time is averaged into the report; a policy failure
    aborts with the offending instance id.
    """
    pairs = []
    elapsed = 0.0
    count = 0
    for instance_id, state, v_star in solved:
        t0 = time.perf_counter()
        try:
            v_hat = policy(state)
        except Exception as exc:
            raise RuntimeError(f"policy failed on instance {instance_id!r}: {exc}") from exc
        elapsed += time.perf_counter() - t0
        pairs.append((float(v_star), float(v_hat)))
        count += 1
    if count == 0:
        raise ValueError("no solved instances to evaluate")
    return compute_metrics(pairs, mean_time_s=elapsed / count)


@dataclass(frozen=True)
class ActionValueRow:
    node: int
    value: float
    optimal: bool


def inspect_action_values(
    s: GameState,
    evaluator,
    tolerance: Optional[float] = None,
) -> list[ActionValueRow]:
    """Per-action afterstate values with co-optimal actions flagged.

    ``evaluator`` is either an expert list (anything with ``value_of``) or
    the string "oracle". All actions within ``tolerance`` of the best are
    flagged; the oracle default tolerance is exact.
    """
    if current_player(s) is Player.TERMINAL:
        raise ValueError("terminal state has no actions to inspect")
    use_oracle = isinstance(evaluator, str) and evaluator == "oracle"
    if tolerance is None:
        tolerance = ORACLE_TOLERANCE if use_oracle else EXPERT_TOLERANCE
    if use_oracle:
        values = {a: float(q) for a, q in minimax_value(s).action_values.items()}
    else:
        values = {}
        for a in legal_actions(s):
            child, reward = next_state(s, a)
            values[a] = reward + evaluator.value_of(child)
    if not values:
        raise ValueError("state has no legal actions")
    maximize = current_player(s) is Player.DEFENDER
    best = max(values.values()) if maximize else min(values.values())
    return [
        ActionValueRow(node=a, value=values[a], optimal=abs(values[a] - best) <= tolerance)
        for a in sorted(values)
    ]
