import json
import math

import numpy as np
import pytest

from rwde._backend import kernels
from rwde._philox import replica_seeds
from rwde.dirichlet import ParameterDomainError, Weights
from rwde.lattice import HomogeneousEnvironment, LatticeEnvironment
from rwde.walk import (
    InsufficientDataError, condition_T_statistic, default_direction, default_slab, default_window,
    detect_renewals, hitting_times, simulate, simulate_renewals,
)

from conftest import CANONICAL

E1 = (1.0, 0.0, 0.0)
A3 = 2 * math.sqrt(3) + 0.1


def line(n, d=3):
    pos = np.zeros((n + 1, d), dtype=np.int64)
    pos[:, 0] = np.arange(n + 1)
    return pos


def test_empty_walk(canonical):
    tr = simulate(LatticeEnvironment(canonical, 1), (2, 0, 0), 0)
    assert tr.positions.tolist() == [[2, 0, 0]]
    assert tr.step_count == 0


def test_forced_direction():
    env = HomogeneousEnvironment([1, 0, 0, 0, 0, 0])
    tr = simulate(env, (0, 1, 0), 12, walk_seed=4)
    assert np.array_equal(tr.positions, line(12) + [0, 1, 0])


def test_one_step_law_matches_vector(canonical):
    env = LatticeEnvironment(canonical, 77)
    p = env.env_at((0, 0, 0))
    n = 10**5
    steps = np.empty(n, dtype=np.int64)
    for k in range(n):
        trace, _, _, _ = kernels.walk(env.seed, k, canonical.alphas, (0, 0, 0), 1, E1, 1.0, 1, 0)
        diff = trace[1] - trace[0]
        i = int(np.flatnonzero(diff)[0])
        steps[k] = i if diff[i] > 0 else i + 3
    freq = np.bincount(steps, minlength=6) / n
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(freq - p) <= 4 * se + 1e-12)


def test_python_loop_equals_kernel_path(canonical):
    env = LatticeEnvironment(canonical, 5)
    fast = simulate(env, (0, 0, 0), 3000, walk_seed=9)
    slow = simulate(env, (0, 0, 0), 3000, stop=lambda v: False, walk_seed=9)
    assert np.array_equal(fast.positions, slow.positions)


def test_stop_predicate(canonical):
    env = HomogeneousEnvironment([1, 0, 0, 0, 0, 0])
    tr = simulate(env, (0, 0, 0), 100, stop=lambda v: v[0] == 5)
    assert tr.step_count == 5


def test_consecutive_positions_are_neighbours(canonical):
    tr = simulate(LatticeEnvironment(canonical, 3), (0, 0, 0), 5000, walk_seed=1)
    assert np.all(np.abs(np.diff(tr.positions, axis=0)).sum(axis=1) == 1)


def test_hitting_times_examples():
    tr = line(5)
    assert hitting_times(tr, [(0, 0, 0)]).H == 0
    assert hitting_times(tr, [(2, 0, 0)]).H == 2
    V = [(0, 0, 0), (1, 0, 0)]
    pos = [(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0), (3, 1, 0), (2, 1, 0), (2, 0, 0), (1, 0, 0)]
    h = hitting_times(np.array(pos), V)
    assert (h.H, h.H_bar, h.H_plus) == (0, 2, 7)
    assert hitting_times(tr, [(9, 9, 9)]).H is None


def test_line_renewals():
    rec = detect_renewals(line(40), E1, A3, 5)
    assert rec.confirmed[:2] == [4, 8]
    assert all(not c for c in rec.censored[:2])
    assert rec.state in (0, 1, 2)


def test_dip_before_clearing_slab_gives_no_renewal():
    lv = [0, 1, 2, 1, 0, -1, 0, 1, 2, 1, 0, -1, -2, -1, 0, 1, 0, -1, -2, -3]
    pos = np.zeros((len(lv), 3), dtype=np.int64)
    pos[:, 0] = lv
    rec = detect_renewals(pos, E1, A3, 5)
    assert rec.confirmed == []


def test_renewal_argument_checks():
    with pytest.raises(ParameterDomainError):
        detect_renewals(line(10), (1.0, 0.1, 0.0), A3, 5)
    with pytest.raises(ParameterDomainError):
        detect_renewals(line(10), E1, 2 * math.sqrt(3), 5)
    with pytest.raises(ValueError):
        detect_renewals(line(10), E1, A3, 0)


def test_renewal_level_monotonicity(canonical):
    u = default_direction(canonical)
    for r in range(30):
        tr, rec = simulate_renewals(canonical, 3, r, 5)
        lv = tr.levels(u)
        times = rec.confirmed
        for t0, t1 in zip(times, times[1:]):
            assert lv[t1] >= lv[t0] + rec.a
        for t in times:
            assert lv[t:].min() >= lv[t]


def test_simulate_renewals_matches_detection(canonical):
    tr, rec = simulate_renewals(canonical, 1, 4, 3)
    again = detect_renewals(tr, rec.u_hat, rec.a, rec.window, max_count=3)
    assert again.times == rec.times


def test_replay_is_bit_identical(canonical):
    a = simulate_renewals(canonical, 42, 7, 4)
    b = simulate_renewals(canonical, 42, 7, 4)
    assert np.array_equal(a[0].positions, b[0].positions)
    assert a[1].to_json() == b[1].to_json()


def test_record_export(tmp_path, canonical):
    tr, rec = simulate_renewals(canonical, 2, 0, 2)
    data = json.loads(rec.to_json())
    assert data["seeds"]["env"] == replica_seeds(2, 0)[0]
    tr.export(tmp_path / "t.txt", every=10)
    lines = (tmp_path / "t.txt").read_text().splitlines()
    assert len(lines) == len(tr.positions[::10])


def test_defaults(canonical):
    assert default_direction(canonical) == (1.0, 0.0, 0.0)
    assert default_slab(3) == pytest.approx(A3)
    speed = 1.25 / 1.55
    assert default_window(canonical, A3) == max(1000, math.ceil(10 * A3 / speed))
    with pytest.raises(ParameterDomainError):
        default_direction(Weights((1,) * 6))


def first_segments(w, n):
    out = []
    for r in range(n):
        tr, rec = simulate_renewals(w, 19, r, 1)
        if rec.confirmed:
            out.append(tr.positions[: rec.confirmed[0] + 1])
    return out


def test_condition_T_statistic(canonical, rng):
    segs = first_segments(canonical, 2000)
    tab = condition_T_statistic(segs, [0.0, 0.02, 0.05, 0.1])
    assert tab.estimate[0] == 1.0
    assert np.all(np.diff(tab.estimate) >= 0)
    half = condition_T_statistic(segs[: len(segs) // 2], [0.05]).estimate[0]
    assert 0.8 <= half / tab.estimate[2] <= 1.25
    assert tab.largest_stable_c is not None and tab.largest_stable_c >= 0.05


def test_condition_T_needs_data():
    with pytest.raises(InsufficientDataError):
        condition_T_statistic([], [0.1])
