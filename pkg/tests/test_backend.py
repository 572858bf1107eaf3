import os
import subprocess
import sys

import numpy as np
import pytest

from rwde import _backend
from rwde._philox import philox4x64, replica_seeds
from rwde.dirichlet import Weights
from rwde.walk import default_window

from conftest import CANONICAL

kc = _backend.kernels_c
kp = _backend.kernels_py
needs_c = pytest.mark.skipif(kc is None, reason="compiled extension not built")


def test_philox_matches_numpy():
    key = [0x0123456789ABCDEF, 0xFEDCBA9876543210]
    ref = np.random.Philox(key=np.array(key, dtype=np.uint64), counter=0).random_raw(4 * 8)
    # numpy bumps the counter before each block
    ours = [w for c in range(8) for w in philox4x64(c + 1, 0, 0, 0, *key)]
    assert ours == [int(w) for w in ref]


def test_replica_seeds_distinct():
    seeds = {s for r in range(1000) for s in replica_seeds(7, r)}
    assert len(seeds) == 2000


def test_backend_selection_default():
    if kc is not None:
        assert _backend.kernels is kc and _backend.BACKEND == "cython"
    else:
        assert _backend.BACKEND == "python"


def test_backend_forced_fallback():
    env = dict(os.environ, RWDE_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "from rwde._backend import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_c
def test_env_parity():
    coords = np.array([[0, 0, 0], [1, -2, 3], [-40, 17, 5], [10**6, 0, -10**6]])
    for seed in (0, 1, 2**63 + 5):
        a = kc.env_batch(seed, coords, CANONICAL)
        b = kp.env_batch(seed, coords, CANONICAL)
        assert np.array_equal(a, b)
        assert np.array_equal(np.asarray(kc.env_vector(seed, [1, -2, 3], CANONICAL)),
                              np.asarray(kp.env_vector(seed, [1, -2, 3], CANONICAL)))
    assert np.allclose(a.sum(axis=1), 1.0)


@needs_c
@pytest.mark.parametrize("start,count", [(0, 17), (3, 9), (1001, 40)])
def test_walk_uniform_parity(start, count):
    a = kc.walk_uniforms(12345, start, count)
    b = kp.walk_uniforms(12345, start, count)
    assert np.array_equal(a, b)
    assert np.all((a > 0) & (a < 1))


@needs_c
def test_find_renewals_parity(rng):
    for _ in range(20):
        levels = np.cumsum(rng.normal(0.3, 1.0, size=2000))
        a = kc.find_renewals(levels, 1.8, 50, 5)
        b = kp.find_renewals(levels, 1.8, 50, 5)
        assert list(a[0]) == list(b[0]) and a[1:] == b[1:]


@needs_c
@pytest.mark.parametrize("replica", range(5))
def test_walk_parity(replica):
    es, ws = replica_seeds(3, replica)
    u = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
    a = 2 * np.sqrt(3) + 0.1
    args = (es, ws, CANONICAL, (0, 0, 0), 20000, u, a, default_window(Weights(CANONICAL), a), 2)
    ta, ra, pa, sa = kc.walk(*args)
    tb, rb, pb, sb = kp.walk(*args)
    assert np.array_equal(ta, tb)
    assert list(ra) == list(rb) and pa == pb and sa == sb


@needs_c
def test_fixed_length_walk_parity():
    es, ws = replica_seeds(11, 0)
    u = np.array([1.0, 0.0, 0.0])
    ta, _, _, sa = kc.walk(es, ws, CANONICAL, (0, 0, 0), 3000, u, 1.0, 10, 0)
    tb, _, _, sb = kp.walk(es, ws, CANONICAL, (0, 0, 0), 3000, u, 1.0, 10, 0)
    assert np.array_equal(ta, tb) and sa == sb == 1
    assert len(ta) == 3001
