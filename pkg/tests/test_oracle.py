import numpy as np
import pytest

from conftest import random_state, variant_params
from mcnlearn.game import (
    BudgetTuple,
    GameState,
    Phase,
    StageKey,
    current_player,
    initial_state,
    next_state,
    stage_of,
    terminal_score,
)
from mcnlearn.graph import Graph, generate_graph
from mcnlearn.oracle import (
    exhaustive_random_support,
    minimax_value,
    optimal_play_states,
    random_policy_value,
    set_enumeration_value,
)


def test_minimax_p3_examples(p3):
    assert minimax_value(initial_state(p3, 0, 1, 0)).value == 0
    assert minimax_value(initial_state(p3, 0, 1, 1)).value == 1
    assert minimax_value(initial_state(p3, 1, 1, 0)).value == 2
    s = initial_state(p3, 0, 0, 0)
    assert minimax_value(s).value == terminal_score(s) == 3


def test_minimax_action_values_and_pv(p3):
    res = minimax_value(initial_state(p3, 1, 1, 0))
    assert res.action_values == {0: 1, 1: 2, 2: 1}
    assert res.value == max(res.action_values.values())
    # principal variation replays to exactly the value
    s = initial_state(p3, 1, 1, 0)
    total = 0
    for a in res.principal_variation:
        s, r = next_state(s, a)
        total += r
    assert total + terminal_score(s) == res.value
    # attacker to move: value is the min over action values
    res2 = minimax_value(initial_state(p3, 0, 1, 1))
    assert res2.value == min(res2.action_values.values())


def test_pv_replay_on_random_instances():
    rng = np.random.default_rng(77)
    for i in range(60):
        s0 = random_state(rng, **variant_params(i))
        res = minimax_value(s0)
        s, total = s0, 0
        for a in res.principal_variation:
            s, r = next_state(s, a)
            total += r
        assert total + terminal_score(s) == res.value
        assert 0 <= res.value <= s0.graph.total_weight


def test_set_enumeration_examples(p3):
    assert set_enumeration_value(p3, BudgetTuple(0, 1, 1)) == 1
    assert set_enumeration_value(p3, BudgetTuple(0, 0, 0)) == 3
    single = Graph([0], [4], [])
    assert set_enumeration_value(single, BudgetTuple(0, 1, 0)) == 0
    assert set_enumeration_value(single, BudgetTuple(0, 0, 0)) == 4


def test_lemma1_equivalence_sample():
    rng = np.random.default_rng(13)
    for i in range(40):
        kwargs = variant_params(i)
        n = int(rng.integers(2, 8))
        g = generate_graph(n, (0.0, 0.6), rng=rng, **kwargs)
        budgets = BudgetTuple(*(int(rng.integers(0, 3)) for _ in range(3)))
        s = initial_state(g, *budgets.as_tuple())
        assert minimax_value(s).value == set_enumeration_value(g, budgets)


def test_memo_on_off_equality():
    rng = np.random.default_rng(3)
    for i in range(60):
        s = random_state(rng, n_range=(2, 6), **variant_params(i))
        assert minimax_value(s, memo=True).value == minimax_value(s, memo=False).value


def test_random_policy_trivial(p3):
    assert random_policy_value(initial_state(p3, 0, 1, 0), episodes=5, seed=0) == 0.0
    single = Graph([0], [1], [])
    assert random_policy_value(initial_state(single, 0, 1, 0), episodes=3, seed=0) == 0.0
    with pytest.raises(ValueError):
        random_policy_value(initial_state(p3, 0, 1, 0), episodes=0)


def test_random_policy_expectation(p3):
    # exact expectation over the 6 equiprobable episodes is 4/3; per-episode
    # variance is 2/9, so 3 sigma of the mean over 20000 episodes ~ 0.01
    episodes = 20000
    est = random_policy_value(initial_state(p3, 0, 1, 1), episodes=episodes, seed=42)
    sigma = np.sqrt((2.0 / 9.0) / episodes)
    assert abs(est - 4.0 / 3.0) <= 3 * sigma


def test_random_policy_deterministic(p3):
    a = random_policy_value(initial_state(p3, 0, 1, 1), episodes=50, seed=9)
    b = random_policy_value(initial_state(p3, 0, 1, 1), episodes=50, seed=9)
    assert a == b


def test_exhaustive_support_examples(p3):
    s = initial_state(p3, 0, 1, 0)
    assert exhaustive_random_support(s, StageKey(Phase.ATTACK, 1)) == {s}
    states = exhaustive_random_support(initial_state(p3, 1, 1, 0), StageKey(Phase.ATTACK, 1))
    assert len(states) == 3  # one per vaccination choice
    for st in states:
        assert st.budgets == BudgetTuple(0, 1, 0) and st.graph.n == 2


def test_optimal_play_states_subset_of_support():
    rng = np.random.default_rng(21)
    for i in range(30):
        s0 = random_state(rng, n_range=(2, 6), budget_max=(1, 2, 1), **variant_params(i))
        if s0.budgets.total == 0:
            continue
        for phase, budget in (
            (Phase.VACCINATION, s0.budgets.omega),
            (Phase.ATTACK, s0.budgets.phi),
            (Phase.PROTECTION, s0.budgets.lambda_),
        ):
            for k in range(1, budget + 1):
                stage = StageKey(phase, k)
                optimal = optimal_play_states(s0, stage)
                support = exhaustive_random_support(s0, stage)
                assert optimal <= support
                if stage_of(s0) == stage:
                    assert support == {s0}
