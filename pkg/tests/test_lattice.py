import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwde.dirichlet import ParameterDomainError, Weights
from rwde.lattice import Box, LatticeEnvironment, box_length, step_index, unit_steps

from conftest import CANONICAL, within_sigma


def test_same_vertex_twice_is_bit_identical(canonical):
    env = LatticeEnvironment(canonical, 99)
    a = env.env_at((3, -1, 4)).copy()
    env._cache.clear()
    b = env.env_at((3, -1, 4))
    assert a.tobytes() == b.tobytes()


def test_cached_vectors_are_read_only(canonical):
    v = LatticeEnvironment(canonical, 1).env_at((0, 0, 0))
    with pytest.raises(ValueError):
        v[0] = 0.5


def test_component_means(canonical):
    env = LatticeEnvironment(canonical, 5)
    coords = np.column_stack([np.arange(10**5), np.zeros(10**5), np.zeros(10**5)])
    P = env.env_batch(coords)
    assert np.all(P > 0)
    for i, a in enumerate(canonical.alphas):
        col = P[:, i]
        assert within_sigma(col.mean(), col.std(ddof=1) / math.sqrt(len(col)), a / canonical.total)


def test_distinct_seeds_differ(canonical):
    a = LatticeEnvironment(canonical, 1).env_at((0, 0, 0))
    b = LatticeEnvironment(canonical, 2).env_at((0, 0, 0))
    assert not np.array_equal(a, b)


def test_query_order_does_not_matter(canonical, rng):
    pts = [tuple(int(c) for c in rng.integers(-20, 20, 3)) for _ in range(300)]
    e1, e2 = LatticeEnvironment(canonical, 11), LatticeEnvironment(canonical, 11)
    for p in pts:
        e1.env_at(p)
    for k in rng.permutation(len(pts)):
        e2.env_at(pts[k])
    assert e1._cache.keys() == e2._cache.keys()
    assert all(np.array_equal(e1._cache[k], e2._cache[k]) for k in e1._cache)


def test_batch_matches_single_queries(canonical, rng):
    env = LatticeEnvironment(canonical, 3)
    coords = rng.integers(-1000, 1000, size=(50, 3))
    P = env.env_batch(coords)
    for row, c in zip(P, coords):
        assert np.array_equal(row, env.env_at(c))


def test_cache_is_bounded(canonical):
    env = LatticeEnvironment(canonical, 3, cache_size=10)
    for k in range(50):
        env.env_at((k, 0, 0))
    assert len(env._cache) == 10


def test_neighbouring_vertices_are_uncorrelated(canonical):
    env = LatticeEnvironment(canonical, 8)
    x = np.column_stack([np.arange(0, 2 * 10**4, 2), np.zeros(10**4), np.zeros(10**4)])
    a = env.env_batch(x)[:, 0]
    b = env.env_batch(x + [1, 0, 0])[:, 0]
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) <= 4.0 / math.sqrt(len(a))


def test_snapshot_round_trip(canonical):
    env = LatticeEnvironment(canonical, 1234)
    again = LatticeEnvironment.from_snapshot(env.snapshot())
    assert np.array_equal(env.env_at((1, 2, 3)), again.env_at((1, 2, 3)))


def test_step_index_and_unit_steps():
    steps = unit_steps(3)
    for i, s in enumerate(steps):
        assert step_index((0, 0, 0), tuple(s)) == i
    with pytest.raises(ValueError):
        step_index((0, 0, 0), (1, 1, 0))


def test_box_length_examples():
    assert box_length(math.e, 1.0, 2.0) == 1
    assert box_length(math.e ** 2, 1.75, 1.0) == 6


def test_box_length_domain():
    with pytest.raises(ParameterDomainError):
        box_length(1.0, 1.0, 1.0)
    with pytest.raises(ParameterDomainError):
        box_length(3.0, 1.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1.0001, 1e12), min_size=2, max_size=20), st.floats(0.5, 20), st.floats(0.01, 10))
def test_box_length_monotone(xs, kappa, c):
    xs = sorted(xs)
    ls = [box_length(x, kappa, c) for x in xs]
    assert ls == sorted(ls)


def test_box_membership_matches_vertices():
    box = Box(2, 3, origin=(5, 0, -1))
    verts = {tuple(v) for v in box.vertices().tolist()}
    assert len(verts) == 3 * 5 * 5
    for x in range(2, 9):
        for y in range(-3, 4):
            for z in range(-4, 2):
                assert ((x, y, z) in box) == ((x, y, z) in verts)


def test_weights_type_is_enforced():
    env = LatticeEnvironment(CANONICAL, 0)
    assert isinstance(env.weights, Weights)
    with pytest.raises(ValueError):
        env.env_at((0, 0))
