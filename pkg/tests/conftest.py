import numpy as np
import pytest

from mcnlearn.game import initial_state
from mcnlearn.graph import Graph, generate_graph
from mcnlearn.oracle import minimax_value


@pytest.fixture
def p3():
    """Unit-weight path 0-1-2."""
    return Graph([0, 1, 2], [1, 1, 1], [(0, 1), (1, 2)])


class OracleStubExperts:
    """Expert-list stand-in that answers with exact minimax values."""

    def value_of(self, state):
        return float(minimax_value(state).value)

    def has(self, stage):
        return True


@pytest.fixture
def oracle_experts():
    return OracleStubExperts()


def random_state(rng, n_range=(3, 7), density=(0.0, 0.6), budget_max=(2, 2, 2),
                 directed=False, weight_range=(1, 1)):
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    g = generate_graph(n, density, directed=directed, weight_range=weight_range, rng=rng)
    omega = int(rng.integers(0, budget_max[0] + 1))
    phi = int(rng.integers(0, budget_max[1] + 1))
    lam = int(rng.integers(0, budget_max[2] + 1))
    return initial_state(g, omega, phi, lam)


def variant_params(i):
    """Cycle through the three game variants."""
    return [
        {"directed": False, "weight_range": (1, 1)},
        {"directed": False, "weight_range": (1, 5)},
        {"directed": True, "weight_range": (1, 1)},
    ][i % 3]
