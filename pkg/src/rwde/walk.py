"""Quenched walks, hitting times, renewal detection and condition (T) statistics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rwde._backend import kernels
from rwde._philox import replica_seeds
from rwde.dirichlet import ParameterDomainError, Weights, kappa_report
from rwde.lattice import LatticeEnvironment, unit_steps


class InsufficientDataError(RuntimeError):
    """Not enough uncensored samples for the requested statistic."""


@dataclass
class WalkTrace:
    positions: np.ndarray  # (n+1, d) int64
    env_seed: int | None = None
    walk_seed: int | None = None
    master_seed: int | None = None
    replica: int | None = None
    n_max: int | None = None

    @property
    def step_count(self) -> int:
        return len(self.positions) - 1

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def levels(self, u_hat) -> np.ndarray:
        return _levels(self.positions, u_hat)

    def export(self, path, every: int = 1) -> None:
        """One vertex per line, keeping every ``every``-th position."""
        rows = self.positions[::every]
        Path(path).write_text("".join(" ".join(map(str, r)) + "\n" for r in rows.tolist()),
                              encoding="utf-8")


@dataclass
class RenewalRecord:
    """Confirmed renewal times plus at most one censored trailing candidate."""

    times: list
    positions: list
    censored: list
    u_hat: tuple
    a: float
    window: int
    state: int = 0
    seeds: dict = field(default_factory=dict)

    @property
    def confirmed(self) -> list:
        return [t for t, c in zip(self.times, self.censored) if not c]

    def increments(self) -> np.ndarray:
        """T_{k+1} - T_k over consecutive confirmed renewals."""
        return np.diff(np.asarray(self.confirmed, dtype=np.int64))

    def to_json(self) -> str:
        return json.dumps({
            "times": [int(t) for t in self.times],
            "positions": [[int(c) for c in p] for p in self.positions],
            "censored": [bool(c) for c in self.censored],
            "u_hat": list(self.u_hat), "a": self.a, "window": self.window,
            "seeds": self.seeds,
        })


@dataclass(frozen=True)
class HittingTimes:
    H: int | None
    H_bar: int | None
    H_plus: int | None


def default_direction(w: Weights) -> tuple:
    drift = np.asarray(kappa_report(w).d_alpha)
    norm = float(np.linalg.norm(drift))
    if norm == 0:
        raise ParameterDomainError("zero drift: no default direction, pass u_hat explicitly")
    return tuple(drift / norm)


def default_slab(d: int) -> float:
    return 2.0 * math.sqrt(d) + 0.1


def default_window(w: Weights, a: float) -> int:
    """max(1000, 10 a / |d_alpha-drift| in steps).

    The annealed one-step drift E[omega_x] . u = |d_alpha| / sum(alpha) sets
    the time scale for crossing a slab of width a.
    """
    rep = kappa_report(w)
    speed = math.sqrt(sum(x * x for x in rep.d_alpha)) / rep.sum_alpha
    if speed == 0:
        return 1000
    return max(1000, math.ceil(10.0 * a / speed))


def _check_unit(u_hat):
    u = [float(x) for x in u_hat]
    if abs(math.sqrt(math.fsum(x * x for x in u)) - 1.0) > 1e-12:
        raise ParameterDomainError(f"direction {u} is not a unit vector")
    return u


def _levels(positions, u_hat) -> np.ndarray:
    # sequential dot, matching the kernels bit for bit
    pos = np.asarray(positions, dtype=float)
    s = np.zeros(len(pos))
    for i, w in enumerate(u_hat):
        s = s + pos[:, i] * w
    return s


def simulate(env, start, n_max: int, stop=None, walk_seed: int = 0) -> WalkTrace:
    """Run the quenched walk for at most ``n_max`` steps.

    The step at time n uses the n-th uniform of the walk stream
    ``walk_seed`` and the inverse CDF of ``env.env_at(X_n)``.  ``stop`` is an
    optional predicate on vertices (tuples); the walk halts at the first
    position (time >= 1) where it returns true.  A lattice environment
    without a predicate takes the compiled path, which gives the same trace.
    """
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    start = tuple(int(c) for c in start)
    if stop is None and isinstance(env, LatticeEnvironment):
        d = env.d
        trace, _, _, _ = kernels.walk(env.seed, walk_seed, env.weights.alphas, start, n_max,
                                      (1.0,) + (0.0,) * (d - 1), 1.0, 1, 0)
        return WalkTrace(trace, env.seed, walk_seed, n_max=n_max)
    steps = unit_steps(len(start))
    last = 2 * len(start) - 1
    us = kernels.walk_uniforms(walk_seed, 0, n_max)
    pos = np.array(start, dtype=np.int64)
    out = [pos.copy()]
    for n in range(n_max):
        p = env.env_at(tuple(pos.tolist()))
        u = us[n]
        cum = 0.0
        i = last
        for k in range(last):
            cum += p[k]
            if u < cum:
                i = k
                break
        pos = pos + steps[i]
        out.append(pos.copy())
        if stop is not None and stop(tuple(pos.tolist())):
            break
    return WalkTrace(np.array(out, dtype=np.int64), getattr(env, "seed", None), walk_seed,
                     n_max=n_max)


def hitting_times(trace, V) -> HittingTimes:
    """H_V = first n >= 0 in V; H_bar = first n >= 0 outside V; H_plus = first entrance from outside."""
    pos = trace.positions if isinstance(trace, WalkTrace) else np.asarray(trace)
    V = {tuple(int(c) for c in v) for v in V}
    inside = np.array([tuple(p) in V for p in pos.tolist()], dtype=bool)

    def first(mask):
        idx = np.flatnonzero(mask)
        return int(idx[0]) if idx.size else None

    h = first(inside)
    hbar = first(~inside)
    entries = np.zeros_like(inside)
    entries[1:] = inside[1:] & ~inside[:-1]
    return HittingTimes(h, hbar, first(entries))


def detect_renewals(trace, u_hat, a: float, confirm_window: int, max_count: int | None = None):
    """Renewal times of a finite trace in direction ``u_hat`` with slab width ``a``.

    A candidate tau is confirmed when the trace never drops below its
    level afterwards and at least ``confirm_window`` steps follow it.  A
    candidate too close to the end of the trace is returned with
    ``censored=True``.
    """
    u = _check_unit(u_hat)
    pos = trace.positions if isinstance(trace, WalkTrace) else np.asarray(trace)
    d = pos.shape[1]
    if not a > 2 * math.sqrt(d):
        raise ParameterDomainError(f"slab width a={a} must exceed 2*sqrt(d)={2 * math.sqrt(d):.6g}")
    if confirm_window < 1:
        raise ValueError("confirm_window must be >= 1")
    lv = _levels(pos, u)
    cap = len(pos) if max_count is None else max_count
    times, pending, state = kernels.find_renewals(lv, float(a), int(confirm_window), int(cap))
    return _record(pos, times, pending, state, u, a, confirm_window)


def _record(pos, times, pending, state, u, a, window, seeds=None):
    times = [int(t) for t in times]
    cens = [False] * len(times)
    if pending >= 0:
        times.append(int(pending))
        cens.append(True)
    return RenewalRecord(times, [tuple(int(c) for c in pos[t]) for t in times], cens,
                         tuple(u), float(a), int(window), int(state), dict(seeds or {}))


def simulate_renewals(weights: Weights, master_seed: int, replica: int, n_renewals: int,
                      u_hat=None, a=None, window=None, n_max: int = 10**7):
    """Walk one replica until ``n_renewals`` renewals are confirmed (or ``n_max``).

    Returns ``(trace, record)``; the record equals ``detect_renewals`` on
    the returned trace.
    """
    u = _check_unit(u_hat if u_hat is not None else default_direction(weights))
    a = default_slab(weights.d) if a is None else float(a)
    window = default_window(weights, a) if window is None else int(window)
    env_seed, walk_seed = replica_seeds(master_seed, replica)
    trace, times, pending, state = kernels.walk(env_seed, walk_seed, weights.alphas,
                                                (0,) * weights.d, n_max, u, a, window, n_renewals)
    seeds = {"master": master_seed, "replica": replica, "env": env_seed, "walk": walk_seed}
    wt = WalkTrace(trace, env_seed, walk_seed, master_seed, replica, n_max)
    return wt, _record(trace, times, pending, state, u, a, window, seeds)


@dataclass
class ConditionTTable:
    c_grid: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    n_segments: int
    largest_stable_c: float | None


def condition_T_statistic(segments, c_grid, rng=None, n_boot: int = 200,
                          ratio_band=(0.8, 1.25)) -> ConditionTTable:
    """Monte Carlo E[sup_{1<=i<=T_1} exp(c |X_i|)] from uncensored first segments.

    ``segments`` is a list of position arrays X_0..X_{T_1}.  A value c is
    called stable when the estimate on the first half of the segments and
    on all of them differ by a ratio inside ``ratio_band``.
    """
    if not segments:
        raise InsufficientDataError("no uncensored renewal segments")
    radii = np.array([np.sqrt((np.asarray(s[1:], dtype=float) ** 2).sum(axis=1)).max()
                      if len(s) > 1 else 0.0 for s in segments])
    c_grid = np.asarray(c_grid, dtype=float)
    est = np.empty(len(c_grid))
    se = np.empty(len(c_grid))
    largest = None
    half = len(radii) // 2
    for k, c in enumerate(c_grid):
        vals = np.exp(c * radii)
        est[k] = vals.mean()
        se[k] = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else math.inf
        if half >= 1 and np.isfinite(est[k]):
            r = vals[:half].mean() / est[k]
            if ratio_band[0] <= r <= ratio_band[1]:
                largest = float(c)
    return ConditionTTable(c_grid, est, se, len(radii), largest)

