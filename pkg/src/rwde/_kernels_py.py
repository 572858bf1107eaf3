"""Pure-Python kernels.

Reference implementation of the hot loops.  ``_kernels.pyx`` mirrors
every function here and must return bit-identical results; the
fallback is selected in ``rwde._backend`` when the extension is missing.
"""

import numpy as np

from rwde._philox import (
    CounterStream, dirichlet_scalar, env_key, philox4x64, to_unit, vertex_lanes, walk_key,
)

NAME = "python"


def env_vector(env_seed, coords, alphas):
    stream = CounterStream(env_key(env_seed), vertex_lanes(coords))
    return dirichlet_scalar(stream, alphas)


def env_batch(env_seed, coords, alphas):
    coords = np.asarray(coords, dtype=np.int64)
    out = np.empty((coords.shape[0], len(alphas)))
    alphas = [float(a) for a in alphas]
    for i, row in enumerate(coords.tolist()):
        out[i] = env_vector(env_seed, row, alphas)
    return out


def walk_uniforms(walk_seed, start, count):
    """Uniforms ``start .. start+count-1`` of the walk stream."""
    k0, k1 = walk_key(walk_seed)
    out = np.empty(count)
    block = -1
    words = ()
    for j in range(count):
        n = start + j
        if n // 4 != block:
            block = n // 4
            words = philox4x64(block, 0, 0, 0, k0, k1)
        out[j] = to_unit(words[n % 4])
    return out


def find_renewals(levels, a, window, max_count):
    """Renewal recursion on a finite array of levels <X_n, u>.

    Returns ``(times, pending, state)`` where ``times`` are confirmed
    renewal indices, ``pending`` is the index of an unconfirmed candidate
    (or -1) and ``state`` is 0 when ``max_count`` renewals were found,
    1 when the trace ended while searching for a new level, 2 when it ended
    inside the confirmation window of a candidate.
    """
    lv = levels
    last = len(lv) - 1
    # suffix minima: smin[i] = min(lv[i:])
    smin = np.minimum.accumulate(np.asarray(lv, dtype=float)[::-1])[::-1].tolist()
    lv = list(lv)
    times = []
    b = 0
    while len(times) < max_count:
        runmax = lv[b]
        n = b
        while True:
            target = runmax + a
            tau = -1
            while n <= last:
                x = lv[n]
                if x > runmax:
                    runmax = x
                if x >= target:
                    tau = n
                    break
                n += 1
            if tau < 0:
                return times, -1, 1
            ref = lv[tau]
            if tau == last or smin[tau + 1] >= ref:
                if last - tau >= window:
                    times.append(tau)
                    b = tau
                    break
                return times, tau, 2
            n = tau + 1
            while lv[n] >= ref:
                if lv[n] > runmax:
                    runmax = lv[n]
                n += 1
            # lv[n] < ref <= runmax, so runmax is already max over [b, n]
            n += 1
    return times, -1, 0


def walk(env_seed, walk_seed, alphas, start, n_max, u_hat, a, window, n_renewals,
         schedule0=256):
    """Simulate one quenched walk until ``n_renewals`` renewals are confirmed.

    The horizon grows on a fixed schedule and the renewal recursion is
    re-evaluated on each prefix, so the result is the exact recursion on
    the returned trace.  ``n_renewals=0`` simply runs ``n_max`` steps.
    """
    alphas = [float(x) for x in alphas]
    k = len(alphas)
    d = k // 2
    u_hat = [float(x) for x in u_hat]
    pos = [int(x) for x in start]
    wk0, wk1 = walk_key(walk_seed)
    cache = {}
    trace = [tuple(pos)]
    levels = [_dot(pos, u_hat)]
    words = ()
    n = 0
    horizon = n_max if n_renewals <= 0 else min(n_max, schedule0 + window)
    while True:
        while n < horizon:
            key = tuple(pos)
            p = cache.get(key)
            if p is None:
                p = env_vector(env_seed, key, alphas)
                cache[key] = p
            if n % 4 == 0:
                words = philox4x64(n // 4, 0, 0, 0, wk0, wk1)
            u = to_unit(words[n % 4])
            i = _pick(p, u)
            if i < d:
                pos[i] += 1
            else:
                pos[i - d] -= 1
            n += 1
            trace.append(tuple(pos))
            levels.append(_dot(pos, u_hat))
        if n_renewals <= 0:
            return np.array(trace, dtype=np.int64), [], -1, 1
        times, pending, state = find_renewals(levels, a, window, n_renewals)
        if state == 0 or horizon >= n_max:
            return np.array(trace, dtype=np.int64), times, pending, state
        horizon = min(n_max, horizon + max(window, horizon // 4))


def _dot(pos, u):
    s = 0.0
    for x, w in zip(pos, u):
        s += x * w
    return s


def _pick(p, u):
    cum = 0.0
    last = len(p) - 1
    for i in range(last):
        cum += p[i]
        if u < cum:
            return i
    return last
