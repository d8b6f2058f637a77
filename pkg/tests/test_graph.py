import numpy as np
import pytest

from mcnlearn.graph import Graph, generate_graph, local_degree_profile, reachable_from, remove_node


def test_single_node_has_no_arcs():
    g = generate_graph(1, (0.0, 1.0), seed=0)
    assert g.n == 1 and g.arcs == ()


def test_arc_count_within_interval():
    # undirected n=10: M=45, d in [0.1, 0.2] -> |E| in [5, 9]
    for seed in range(50):
        g = generate_graph(10, (0.1, 0.2), seed=seed)
        assert 5 <= len(g.arcs) <= 9


def test_arc_count_interval_many_seeds():
    for seed in range(1000):
        directed = seed % 2 == 0
        n = 4 + seed % 6
        m = n * (n - 1) if directed else n * (n - 1) // 2
        lo = int(np.ceil(0.15 * m))
        hi = int(np.floor(0.5 * m))
        g = generate_graph(n, (0.15, 0.5), directed=directed, seed=seed)
        assert lo <= len(g.arcs) <= hi


def test_generation_deterministic():
    a = generate_graph(12, (0.1, 0.4), weight_range=(1, 5), seed=123)
    b = generate_graph(12, (0.1, 0.4), weight_range=(1, 5), seed=123)
    assert a == b and a.weights == b.weights


def test_generation_rejects_bad_ranges():
    with pytest.raises(ValueError):
        generate_graph(5, (0.5, 0.2), seed=0)
    with pytest.raises(ValueError):
        generate_graph(5, (0.0, 1.2), seed=0)
    with pytest.raises(ValueError):
        generate_graph(5, (0.1, 0.2), weight_range=(0, 3), seed=0)
    with pytest.raises(ValueError):
        generate_graph(3, (0.0, 0.05), seed=0, require_arcs=True)


def test_graph_invariants_enforced():
    with pytest.raises(ValueError):
        Graph([0, 1], [1, 1], [(0, 0)])
    with pytest.raises(ValueError):
        Graph([0, 1], [1, 1], [(0, 1), (1, 0)])  # duplicate once canonicalized
    with pytest.raises(ValueError):
        Graph([0, 1], [1, 1], [(0, 2)])
    with pytest.raises(ValueError):
        Graph([0, 1], [1, 0], [])
    # directed graphs keep both orientations
    g = Graph([0, 1], [1, 1], [(0, 1), (1, 0)], directed=True)
    assert len(g.arcs) == 2


def test_remove_node_path():
    g = Graph([0, 1, 2], [1, 1, 1], [(0, 1), (1, 2)])
    h = remove_node(g, 1)
    assert h.nodes == (0, 2) and h.arcs == ()
    single = Graph([5], [2], [])
    assert remove_node(single, 5).n == 0
    tri = Graph([0, 1, 2], [1, 1, 1], [(0, 1), (0, 2), (1, 2)])
    assert remove_node(tri, 0).arcs == ((1, 2),)
    with pytest.raises(KeyError):
        remove_node(g, 99)


def test_reachable_examples():
    p3 = Graph([0, 1, 2], [1, 1, 1], [(0, 1), (1, 2)])
    assert reachable_from(p3, {1}) == {0, 1, 2}
    chain = Graph([0, 1, 2], [1, 1, 1], [(0, 1), (1, 2)], directed=True)
    assert reachable_from(chain, {2}) == {2}
    assert reachable_from(chain, {0}) == {0, 1, 2}
    assert reachable_from(p3, set()) == frozenset()


def test_reachable_monotone_and_idempotent():
    rng = np.random.default_rng(7)
    for i in range(50):
        g = generate_graph(int(rng.integers(2, 9)), (0.0, 0.6), directed=bool(i % 2), rng=rng)
        nodes = list(g.nodes)
        small = set(v for v in nodes if rng.random() < 0.3)
        big = small | set(v for v in nodes if rng.random() < 0.3)
        r_small = reachable_from(g, small)
        r_big = reachable_from(g, big)
        assert r_small <= r_big
        assert reachable_from(g, r_small) == r_small


def test_remove_node_never_enlarges_reachability():
    rng = np.random.default_rng(11)
    for i in range(50):
        g = generate_graph(int(rng.integers(2, 9)), (0.0, 0.6), directed=bool(i % 2), rng=rng)
        sources = {v for v in g.nodes if rng.random() < 0.4}
        v = int(rng.choice(g.nodes))
        before = reachable_from(g, sources)
        after = reachable_from(remove_node(g, v), sources - {v})
        assert after <= before - {v}


def test_ldp_examples():
    iso = Graph([0], [1], [])
    assert np.array_equal(local_degree_profile(iso), np.zeros((1, 5)))
    p3 = Graph([0, 1, 2], [1, 1, 1], [(0, 1), (1, 2)])
    ldp = local_degree_profile(p3)
    assert np.allclose(ldp[1], [2, 1, 1, 1, 0])
    assert np.allclose(ldp[0], [1, 2, 2, 2, 0])


def test_ldp_min_mean_max_ordering():
    rng = np.random.default_rng(3)
    for i in range(30):
        g = generate_graph(int(rng.integers(2, 10)), (0.0, 0.7), directed=bool(i % 2), rng=rng)
        ldp = local_degree_profile(g)
        deg = ldp[:, 0]
        positive = deg >= 1
        assert np.all(ldp[positive, 1] <= ldp[positive, 3] + 1e-12)
        assert np.all(ldp[positive, 3] <= ldp[positive, 2] + 1e-12)


def test_directed_ldp_counts_both_directions():
    g = Graph([0, 1, 2], [1, 1, 1], [(0, 1), (2, 1)], directed=True)
    ldp = local_degree_profile(g)
    # node 1 has in-degree 2, out-degree 0 -> degree 2, neighbour degrees (1, 1)
    assert np.allclose(ldp[1], [2, 1, 1, 1, 0])
