import math

import numpy as np
import pytest

from rwde.dirichlet import ParameterDomainError, Weights
from rwde.lattice import Box, HomogeneousEnvironment, LatticeEnvironment
from rwde.traps import (
    Configuration, TrapSet, complement_pairs, configuration, decompose_T1, default_eps_m,
    find_traps, forget, geometric_moment_check, is_trap, quasi_independence_check, strength,
    time_buckets, trap_strength_tail, trap_time_tail_given_config, traps_along,
)
from rwde.traps import _excursion_total
from rwde.walk import simulate_renewals

from conftest import CANONICAL

O, A, B, C = (0, 0, 0), (1, 0, 0), (2, 0, 0), (2, 1, 0)
FIXTURE = [O, A, B, A, B, C]


def fixture_traps():
    ts = TrapSet()
    ts.add(A, B, 0.9, 0.8)
    return ts


# definitions


def test_trap_definition_examples():
    assert is_trap(0.8, 0.8)
    p, s = strength(0.8, 0.8)
    assert s == pytest.approx(2.5) and p == pytest.approx(0.64)
    assert not is_trap(0.9, 0.5)


def test_vertex_exclusivity_is_enforced():
    ts = fixture_traps()
    with pytest.raises(AssertionError):
        ts.add(B, C, 0.8, 0.8)


def test_find_traps_region(canonical):
    env = LatticeEnvironment(canonical, 31)
    box = Box(6, 3)
    traps = find_traps(env, box)
    seen = set()
    for f in traps:
        x, y = sorted(f)
        assert x in box and y in box
        assert env.prob(x, y) + env.prob(y, x) > 1.5
        assert not (seen & f)
        seen |= f
    assert len(traps) > 0


def test_trap_frequency_against_two_vertex_oracle(canonical, rng):
    env = LatticeEnvironment(canonical, 2)
    n = 10**6
    x = np.column_stack([np.arange(0, 2 * n, 2), np.zeros(n), np.zeros(n)])
    fwd = env.env_batch(x)[:, 0]
    back = env.env_batch(x + [1, 0, 0])[:, 3]
    lattice = float(np.mean(fwd + back > 1.5))
    qx, qy = complement_pairs(canonical, 1, n, rng)
    oracle = float(np.mean(qx + qy < 0.5))
    se = math.sqrt(lattice * (1 - lattice) / n + oracle * (1 - oracle) / n)
    assert abs(lattice - oracle) <= 4 * se


def test_pf_sf_bounds(canonical, rng):
    qx, qy = complement_pairs(canonical, 1, 10**6, rng)
    prod = (qx + qy - qx * qy) / (qx + qy)
    assert np.all(prod > 0) and np.all(prod <= 1)
    assert np.all(prod[qx + qy < 0.5] >= 0.5)


# strength tail


def test_strength_tail_monotone_and_light_regime(rng):
    tail = trap_strength_tail(Weights(CANONICAL), 1, [2, 5, 10, 50, 100], 10**6, rng)
    assert np.all(np.diff(tail.tail) <= 0)
    light = trap_strength_tail(Weights((1,) * 6), 1, [10, 20, 50], 10**6, rng)
    assert np.all(light.tail < 1e-6)
    assert np.all(np.diff(light.tail) <= 0)


def test_strength_tail_domain():
    with pytest.raises(ParameterDomainError):
        trap_strength_tail(Weights(CANONICAL), 1, [1.5], 10)
    with pytest.raises(ParameterDomainError):
        trap_strength_tail(Weights(CANONICAL), 4, [10], 10)


# decomposition


def test_decompose_fixture():
    dec = decompose_T1(FIXTURE, 5, fixture_traps())
    (rec,) = dec.traps
    assert rec.n_visits == 1 and rec.n_xy == 1
    assert rec.visit_lengths == [3]
    assert dec.T1_out == 1
    assert dec.check()


def test_trap_free_trace():
    pos = [(k, 0, 0) for k in range(8)]
    dec = decompose_T1(pos, 7, TrapSet())
    assert dec.T1_in == 0 and dec.T1_out == 7 and dec.traps == []


def test_decompose_needs_long_enough_trace():
    with pytest.raises(ParameterDomainError):
        decompose_T1(FIXTURE, 9, fixture_traps())


def test_buckets():
    dec = decompose_T1(FIXTURE, 5, fixture_traps(), h=1.0, m=5)
    total = sum(dec.buckets[k] for k in ("weak", "strong_few", "strong_many"))
    assert total == 3
    assert time_buckets(dec.traps, 100.0, 5)["weak"] == 3
    eps, m = default_eps_m(1.75)
    assert eps == 0.1 and m == math.floor(0.1 ** (-2.75 / 1.85))


def simulated(canonical, n, seed=13):
    for r in range(n):
        tr, rec = simulate_renewals(canonical, seed, r, 1)
        if rec.state:
            continue
        T1 = rec.times[0]
        env = LatticeEnvironment(canonical, tr.env_seed, cache_size=0)
        yield tr.positions, T1, traps_along(env, tr.positions[:T1])


def test_identity_and_configuration_consistency(canonical):
    checked = 0
    for pos, T1, traps in simulated(canonical, 300):
        dec = decompose_T1(pos, T1, traps)
        assert dec.T1_total - dec.T1_out - dec.T1_in == 0
        for rec in dec.traps:
            c = configuration(pos[:T1], {rec.x, rec.y}, traps, closed_end=True)
            assert c == rec.configuration()
            assert c.n_prime_x + c.n_prime_y == rec.n_visits
            # returning visits have even length, crossings odd
            checked += 1
    assert checked > 0


# partially forgotten walk


def test_forget_fixture():
    fw = forget(FIXTURE, fixture_traps())
    assert fw.t == [0, 1, 4, 5]
    assert fw.path == [O, A, B, C]
    assert not fw.trimmed


def test_forget_trap_free_and_idempotent(canonical):
    pos = [(k, 0, 0) for k in range(6)]
    assert forget(pos, TrapSet()).path == pos
    ts = fixture_traps()
    once = forget(FIXTURE, ts).path
    assert forget(once, ts).path == once
    for pos, T1, traps in simulated(canonical, 100, seed=5):
        once = forget(pos[:T1 + 1], traps, closed_end=True).path
        assert forget(once, traps, closed_end=True).path == once


def test_forget_trims_final_partial_visit():
    fw = forget([O, A, B, A], fixture_traps())
    assert fw.trimmed and fw.path == [O]


def test_configuration_fixture():
    c = configuration(FIXTURE, {A, B}, fixture_traps())
    assert c == Configuration(1, 0, 1, 0, 0)
    assert c.n_prime_y == 1 and c.n_prime_x == 0


def test_configuration_depends_on_forgotten_path_only():
    ts = fixture_traps()
    short = [O, A, B, C]
    assert forget(short, ts).path == forget(FIXTURE, ts).path
    assert configuration(short, {A, B}, ts) == configuration(FIXTURE, {A, B}, ts)


def test_configuration_of_unvisited_trap():
    with pytest.raises(ParameterDomainError):
        configuration([O, (0, 1, 0)], {A, B}, fixture_traps())


def test_visit_length_parity(rng):
    qx = rng.uniform(0.01, 0.2, 10000)
    qy = rng.uniform(0.01, 0.2, 10000)
    cross = _excursion_total(Configuration(1, 0, 1, 0, 0), qx, qy, rng)
    back = _excursion_total(Configuration(1, 1, 0, 0, 0), qx, qy, rng)
    assert np.all(cross >= 1) and np.all(cross % 2 == 1)
    assert np.all(back % 2 == 0)


def test_walk_visit_lengths_have_consistent_parity(canonical):
    for pos, T1, traps in simulated(canonical, 300, seed=23):
        for rec in decompose_T1(pos, T1, traps).traps:
            if rec.completed == rec.n_visits and rec.n_visits == 1:
                crossing = rec.n_xy == 1
                assert rec.visit_lengths[0] % 2 == (1 if crossing else 0)


# conditional law given a configuration


def test_conditional_tail_stabilises(rng):
    ct = trap_time_tail_given_config(Weights(CANONICAL), Configuration(1, 0, 1, 0, 0), 0.1,
                                     [50, 100, 200, 400], 2 * 10**6, rng)
    assert not ct.empty
    ratios = ct.scaled[1:] / ct.scaled[:-1]
    assert np.all((ratios >= 0.7) & (ratios <= 1.4))
    assert np.all(np.diff(ct.tail) <= 0)


def test_conditional_tail_domain(rng):
    with pytest.raises(ParameterDomainError):
        trap_time_tail_given_config(Weights(CANONICAL), Configuration(1, 0, 0, 0, 0), 0.1, [10], 10, rng)
    with pytest.raises(ParameterDomainError):
        trap_time_tail_given_config(Weights(CANONICAL), Configuration(1, 0, 1, 0, 0), 0.0, [10], 10, rng)


def test_quasi_independence_envelope(rng):
    for c in (Configuration(1, 0, 1, 0, 0), Configuration(1, 1, 0, 0, 0), Configuration(1, 1, 1, 0, 1)):
        chk = quasi_independence_check(Weights(CANONICAL), c, [10, 20, 50, 100], 10**6, rng)
        assert np.all(chk.inside)


# geometric moments


def test_geometric_moments(rng):
    g = geometric_moment_check([0.9, 0.5, 0.1, 0.01], [1.0, 1.5, 2.0], 10**6, rng)
    for k, p in enumerate(g.p):
        assert abs(g.estimate[0, k] - 1.0) <= 4 * g.stderr[0, k]
        assert abs(g.estimate[2, k] - (2 - p)) <= 4 * g.stderr[2, k]
    assert np.all(g.estimate[1] <= 2.0)
    with pytest.raises(ParameterDomainError):
        geometric_moment_check([1.0], [1.0], 10)
