import math
from collections import Counter

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwde.dirichlet import Weights, kappa_report
from rwde.graph import (
    CEMETERY, EnumerationBudgetError, EnvironmentOnGraph, FiniteGraph, GraphDomainError,
    ReducibleChainError, connected_supersets, contract, divergence, divergence_vector,
    hitting_probabilities, invariant_measure, kappa_of_set, lattice_box_graph, read_edgelist,
    return_probability_beta_bound, reverse_environment, sample_environment, sample_environments,
    stationarity_residual, write_edgelist,
)
from rwde.stable import ks_distance

from conftest import CANONICAL, bidirected_triangle


def random_strong_graph(rng, n, extra):
    """Bidirected cycle plus random extra edges: strongly connected."""
    edges = []
    for i in range(n):
        edges.append((i, (i + 1) % n, float(rng.uniform(0.2, 3))))
        edges.append(((i + 1) % n, i, float(rng.uniform(0.2, 3))))
    for _ in range(extra):
        a, b = rng.choice(n, 2, replace=False)
        edges.append((int(a), int(b), float(rng.uniform(0.2, 3))))
    return FiniteGraph(edges)


# divergence


def test_triangle_has_null_divergence():
    assert all(v == 0 for v in divergence_vector(bidirected_triangle()).values())


def test_single_edge_divergence():
    g = FiniteGraph([("a", "b", 2.0)])
    assert divergence(g, "a") == 2.0
    assert divergence(g, "b") == -2.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6), st.floats(0.01, 5)), min_size=1, max_size=30))
def test_divergence_sums_to_zero(edges):
    g = FiniteGraph(edges)
    assert math.fsum(divergence_vector(g).values()) == pytest.approx(0.0, abs=1e-9)


# contraction


def test_contract_edge_degree_in_box():
    g = lattice_box_graph(Weights((1,) * 6), 2, cemetery=True)
    h = contract(g, [(0, 0, 0), (1, 0, 0)])
    out = [e for e in h.out_edges("x_f")]
    inc = [e for e in h.in_edges("x_f")]
    assert len(out) == 10 and len(inc) == 10


def test_contract_everything():
    g = bidirected_triangle()
    h = contract(g, g.vertices)
    assert h.vertices == ["x_f"] and h.edges == []
    gc = FiniteGraph([(0, 1, 1), (1, 0, 1), (1, CEMETERY, 0.5)])
    hc = contract(gc, [0, 1])
    assert hc.edges == [("x_f", CEMETERY, 0.5)]


def test_contract_preserves_boundary_weights(rng):
    g = random_strong_graph(rng, 8, 12)
    f = {0, 1, 2}
    boundary = sorted(w for t, h, w in g.edges if (t in f) != (h in f))
    h = contract(g, f)
    incident = sorted(w for t, hd, w in h.edges if "x_f" in (t, hd))
    assert incident == boundary


def test_contract_rejects_disconnected():
    g = FiniteGraph([(0, 1, 1), (1, 2, 1), (2, 3, 1)])
    with pytest.raises(GraphDomainError):
        contract(g, [0, 3])


# invariant measure


def test_doubly_stochastic_is_uniform():
    g = bidirected_triangle()
    pi = invariant_measure(g, EnvironmentOnGraph(g, [0.3, 0.7, 0.3, 0.7, 0.3, 0.7]))
    assert pi == pytest.approx([1 / 3] * 3, abs=1e-14)


def test_two_cycle():
    g = FiniteGraph([("a", "b", 1), ("b", "a", 1)])
    assert invariant_measure(g, EnvironmentOnGraph(g, [1.0, 1.0])) == pytest.approx([0.5, 0.5])


def test_invariant_measure_matches_occupation(rng):
    g = random_strong_graph(rng, 5, 6)
    om = sample_environment(g, rng)
    pi = invariant_measure(g, om)
    assert stationarity_residual(om, pi) < 1e-12
    P = om.matrix()
    cum = np.cumsum(P, axis=1)
    u = rng.random(10**6)
    x = 0
    counts = np.zeros(5)
    for k in range(10**6):
        x = min(int(np.searchsorted(cum[x], u[k], side="right")), 4)
        counts[x] += 1
    assert np.abs(counts / 10**6 - pi).max() < 1e-2


def test_large_graph_uses_sparse_solve(rng):
    g = random_strong_graph(rng, 2500, 500)
    om = sample_environment(g, rng)
    pi = invariant_measure(g, om)
    assert stationarity_residual(om, pi) < 1e-12
    assert pi.sum() == pytest.approx(1.0)


def test_reducible_chain_names_a_class():
    g = FiniteGraph([(0, 1, 1), (1, 2, 1), (2, 1, 1)])
    with pytest.raises(ReducibleChainError) as info:
        invariant_measure(g, EnvironmentOnGraph(g, [1.0, 1.0, 1.0]))
    assert set(info.value.component) == {1, 2}


# reversal


def conductance_environment(g, rng):
    """Reversible environment from symmetric conductances."""
    c = {}
    for t, h, _ in g.edges:
        c.setdefault(frozenset((t, h)), rng.uniform(0.1, 2))
    probs = np.array([c[frozenset((t, h))] for t, h, _ in g.edges])
    tot = np.zeros(len(g.vertices))
    np.add.at(tot, g.tails, probs)
    return EnvironmentOnGraph(g, probs / tot[g.tails])


def test_reversible_environment_is_fixed(rng):
    g = random_strong_graph(rng, 6, 0)
    om = conductance_environment(g, rng)
    rg, rev = reverse_environment(g, om)
    # edge e = (x, y) of g is edge (y, x) of rg; compare probabilities of the same directed step
    lookup = {(t, h): p for (t, h, _), p in zip(rg.edges, rev.probs)}
    for (t, h, _), p in zip(g.edges, om.probs):
        assert lookup[(t, h)] == pytest.approx(p, abs=1e-12)


def test_reversible_fixture_ks_statistic_zero(rng):
    g = random_strong_graph(rng, 5, 0)
    (x, y, _) = g.edges[0]
    fwd, back = [], []
    for _ in range(200):
        om = conductance_environment(g, rng)
        rg, rev = reverse_environment(g, om)
        fwd.append(om.probs[0])
        back.append({(t, h): p for (t, h, _), p in zip(rg.edges, rev.probs)}[(x, y)])
    stat, _ = ks_distance(np.round(fwd, 12), np.round(back, 12), n_perm=0)
    assert stat == 0.0


def test_double_reversal(rng):
    g = random_strong_graph(rng, 6, 8)
    om = sample_environment(g, rng)
    rg, rev = reverse_environment(g, om)
    g2, back = reverse_environment(rg, rev)
    assert g2.edges == g.edges
    assert np.abs(back.probs - om.probs).max() < 1e-10
    row = np.zeros(len(rg.vertices))
    np.add.at(row, rg.tails, rev.probs)
    assert np.abs(row - 1).max() < 1e-12


def test_null_divergence_is_preserved(rng):
    g = bidirected_triangle(1.7)
    assert all(abs(v) < 1e-12 for v in divergence_vector(g.reversed()).values())


def test_reversed_triangle_marginal(rng):
    g = bidirected_triangle()
    probs = sample_environments(g, rng, 10**4)
    rev = np.array([reverse_environment(g, EnvironmentOnGraph(g, p))[1].probs[0] for p in probs])
    direct = sample_environments(g.reversed(), rng, 10**4)[:, 0]
    _, p = ks_distance(rev, direct, 1000, rng=rng)
    assert p >= 0.01


# hitting probabilities and the Beta bound


def test_hitting_probabilities_against_simulation(rng):
    for _ in range(3):
        g = random_strong_graph(rng, 6, 5)
        om = sample_environment(g, rng)
        P = om.matrix()
        h = hitting_probabilities(P, [5], avoid=[0])
        cum = np.cumsum(P, axis=1)
        n = 20000
        hits = 0
        for _ in range(n):
            x = 2
            while x not in (0, 5):
                x = min(int(np.searchsorted(cum[x], rng.random(), side="right")), 5)
            hits += x == 5
        se = math.sqrt(h[2] * (1 - h[2]) / n)
        assert abs(hits / n - h[2]) <= 4 * se + 1e-12


def test_beta_bound_two_cycle():
    g = FiniteGraph([("a", "b", 1), ("b", "a", 1)])
    lhs, rhs = return_probability_beta_bound(g, EnvironmentOnGraph(g, [1.0, 1.0]), "a", "b")
    assert lhs == pytest.approx(1.0) and rhs == pytest.approx(1.0)


def test_beta_bound_law_on_triangle(rng):
    g = bidirected_triangle()
    probs = sample_environments(g, rng, 10**4)
    pairs = np.array([return_probability_beta_bound(g, EnvironmentOnGraph(g, p), 0, 1) for p in probs])
    assert np.all(pairs[:, 0] >= pairs[:, 1] - 1e-12)
    # exact Dirichlet marginal of the reversed step 0 -> 1: Beta(alpha(1,0), alpha_0 - alpha(1,0))
    _, p = ks_distance(pairs[:, 1], rng.beta(1.0, 1.0, 10**4), 1000, rng=rng)
    assert p >= 0.01


# kappa of a set


def test_kappa_of_edge_all_ones():
    g = lattice_box_graph(Weights((1,) * 6), 2, cemetery=True)
    assert kappa_of_set(g, (0, 0, 0), {(0, 0, 0), (1, 0, 0)}) == 10.0


def test_kappa_of_edge_canonical():
    w = Weights(CANONICAL)
    g = lattice_box_graph(w, 2, cemetery=True)
    assert kappa_of_set(g, (0, 0, 0), {(0, 0, 0), (1, 0, 0)}) == kappa_report(w).kappa_j[0]
    assert kappa_report(w).kappa_j[0] == pytest.approx(1.75)


def test_three_vertex_sets_exceed_kappa():
    w = Weights(CANONICAL)
    g = lattice_box_graph(w, 2, cemetery=True)
    root = (0, 0, 0)
    triples = {frozenset(K) for K in connected_supersets(g, {root}, 3) if len(K) == 3}
    assert len(triples) > 0
    best = min(kappa_of_set(g, root, S) for S in triples)
    assert best > kappa_report(w).kappa


def test_kappa_modes_and_budget():
    g = lattice_box_graph(Weights((1,) * 6), 2, cemetery=True)
    S = {(0, 0, 0), (1, 0, 0)}
    assert kappa_of_set(g, (0, 0, 0), S, mode="subset") == 10.0
    assert kappa_of_set(g, (0, 0, 0), S, mode="free") == 10.0
    with pytest.raises(EnumerationBudgetError):
        kappa_of_set(g, (0, 0, 0), S, max_size=6, budget=1000)
    with pytest.raises(GraphDomainError):
        kappa_of_set(g, (1, 1, 1), S)


def test_connected_supersets_match_networkx():
    g = lattice_box_graph(Weights((1,) * 4), 2)
    ours = {frozenset(K) for K in connected_supersets(g, {(0, 0)}, 4)}
    G = nx.Graph([(t, h) for t, h, _ in g.edges])
    ref = set()
    for size in range(1, 5):
        for combo in _subsets_with(G, (0, 0), size):
            ref.add(combo)
    assert ours == ref


def _subsets_with(G, root, size):
    nodes = [v for v in G if max(abs(v[0]), abs(v[1])) <= size]
    from itertools import combinations
    for rest in combinations([v for v in nodes if v != root], size - 1):
        K = frozenset((root,) + rest)
        if nx.is_connected(G.subgraph(K)):
            yield K


# I/O


def test_edgelist_round_trip(tmp_path, rng):
    g = random_strong_graph(rng, 5, 3)
    p = tmp_path / "g.edges"
    write_edgelist(g, p)
    h = read_edgelist(p)
    assert Counter(h.edges) == Counter(g.edges)


def test_cemetery_must_be_absorbing():
    with pytest.raises(GraphDomainError):
        FiniteGraph([(CEMETERY, 0, 1.0), (0, CEMETERY, 1.0)])
