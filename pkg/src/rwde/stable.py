"""Totally asymmetric kappa-stable laws and heavy-tail statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from rwde.dirichlet import ParameterDomainError, _as_rng
from rwde.walk import InsufficientDataError


@dataclass(frozen=True)
class StableParams:
    """Law with characteristic function exp(-s c^kappa |l|^kappa (1 - i sgn(l) tan(pi kappa / 2))).

    In the usual (alpha, beta, sigma, mu) S1 parametrization this is
    alpha = kappa, beta = +1, sigma = c s^(1/kappa), mu = 0.
    """

    kappa: float
    scale: float = 1.0
    s: float = 1.0

    def __post_init__(self):
        if not 0 < self.kappa < 2:
            raise ParameterDomainError(f"stability index must lie in (0, 2), got {self.kappa}")
        if self.kappa == 1:
            raise ParameterDomainError("kappa = 1 needs a logarithmic correction and is not supported")
        if not self.scale > 0 or self.s < 0:
            raise ParameterDomainError("need scale > 0 and s >= 0")

    @property
    def sigma(self) -> float:
        return self.scale * self.s ** (1.0 / self.kappa)


def stable_char_function(params: StableParams, lam):
    lam = np.asarray(lam, dtype=float)
    k = params.kappa
    expo = -params.s * params.scale ** k * np.abs(lam) ** k * (1 - 1j * np.sign(lam) * math.tan(math.pi * k / 2))
    out = np.exp(expo)
    return out[()] if out.ndim == 0 else out


def sample_stable(params: StableParams, n: int, rng=None) -> np.ndarray:
    """Chambers-Mallows-Stuck draws (scipy's sampler) in the convention above."""
    rng = _as_rng(rng)
    if params.s == 0:
        return np.zeros(n)
    law = stats.levy_stable
    loc = 0.0
    if law.parameterization == "S0":
        # S0 location = S1 location + beta sigma tan(pi alpha / 2)
        loc = params.sigma * math.tan(math.pi * params.kappa / 2)
    return law.rvs(params.kappa, 1.0, loc=loc, scale=params.sigma, size=n, random_state=rng)


def empirical_char_function(samples, lam):
    x = np.asarray(samples, dtype=float)
    return np.array([np.mean(np.exp(1j * l * x)) for l in np.atleast_1d(lam)])


@dataclass(frozen=True)
class HillResult:
    index: float
    stderr: float
    k: int
    threshold: float
    slope: float  # log-log survival regression over the same top k


def select_k_top(samples, min_k: int = 50, max_fraction: float = 0.05) -> int:
    """Number of upper order statistics by the minimum-KS-distance rule.

    For each candidate k the Hill fit defines a Pareto law above the
    threshold X_(n-k); the k whose fit is closest in KS distance to the
    empirical exceedances is returned.  Candidates never split a run of
    tied values, which matters for integer-valued samples.
    """
    x = np.sort(np.asarray(samples, dtype=float)[np.asarray(samples) > 0])[::-1]
    n = x.size
    logs = np.log(x)
    csum = np.cumsum(logs)
    cand = np.flatnonzero(x[1:] < x[:-1]) + 1  # x[k] strictly below x[k-1]
    cand = cand[(cand >= min_k) & (cand <= max(min_k, max_fraction * n))]
    if cand.size == 0:
        raise InsufficientDataError(f"fewer than {min_k} distinct upper order statistics")
    best_k, best_d = None, math.inf
    for k in cand:
        u = x[k]
        H = csum[k - 1] / k - logs[k]
        if H <= 0:
            continue
        top = x[:k][::-1]
        fit = 1.0 - (top / u) ** (-1.0 / H)
        emp = np.arange(1, k + 1) / k
        ends = np.append(top[1:] != top[:-1], True)
        dist = float(np.abs(emp[ends] - fit[ends]).max())
        if dist < best_d:
            best_k, best_d = int(k), dist
    if best_k is None:
        raise InsufficientDataError("no admissible threshold")
    return best_k


def hill_estimator(samples, k_top=None) -> HillResult:
    """Hill index 1/H with H the mean log-spacing of the top k order statistics.

    ``k_top`` defaults to 1% of the sample; ``"auto"`` selects it with
    ``select_k_top``.
    """
    x = np.asarray(samples, dtype=float)
    x = x[x > 0]
    n = x.size
    if k_top == "auto":
        k = select_k_top(x)
    else:
        k = max(1, n // 100) if k_top is None else int(k_top)
    if k < 10 or k >= n / 2:
        raise InsufficientDataError(f"need 10 <= k < n/2 exceedances (k={k}, n={n})")
    xs = np.sort(x)
    top = xs[n - k:]
    u = xs[n - k - 1]
    logs = np.log(top / u)  # ratio first: exact under power-of-two rescaling
    H = float(logs.mean())
    if H <= 0:
        raise InsufficientDataError("top order statistics are all tied")
    index = 1.0 / H
    # survival regression: log(i / n) against log of the i-th largest value
    ranks = np.arange(k, 0, -1)
    slope = float(np.polyfit(np.log(top), np.log(ranks / n), 1)[0])
    return HillResult(index, index / math.sqrt(k), k, float(u), -slope)


@dataclass(frozen=True)
class Plateau:
    ks: np.ndarray
    estimates: np.ndarray
    spread: float
    present: bool
    index: float | None


def hill_plateau(samples, lo: float = 0.001, hi: float = 0.05, n_points: int = 20,
                 max_spread: float = 0.3) -> Plateau:
    """Hill estimates on a log grid of k in [lo n, hi n].

    A heavy tail shows up as a flat stretch: the plateau is declared
    present when (max - min) / median of the estimates is at most
    ``max_spread``, and the median is then reported as the index.
    """
    x = np.asarray(samples, dtype=float)
    x = x[x > 0]
    n = x.size
    ks = np.unique(np.geomspace(max(10, lo * n), hi * n, n_points).astype(int))
    ks = ks[(ks >= 10) & (ks < n / 2)]
    if ks.size < 2:
        raise InsufficientDataError("sample too small for a plateau scan")
    xs = np.sort(x)[::-1]
    logs = np.log(xs)
    csum = np.cumsum(logs)
    est = np.array([1.0 / (csum[k - 1] / k - logs[k]) if csum[k - 1] / k > logs[k] else np.inf
                    for k in ks])
    med = float(np.median(est))
    spread = float((est.max() - est.min()) / med) if np.all(np.isfinite(est)) else math.inf
    present = spread <= max_spread
    return Plateau(ks, est, spread, present, med if present else None)


def _ks_stat_sorted(labels_sorted, last_of_tie, na, nb):
    # labels: 1 for sample a, 0 for b, in pooled sorted order (rows = permutations)
    ca = np.cumsum(labels_sorted, axis=-1)
    cb = np.arange(1, labels_sorted.shape[-1] + 1) - ca
    diff = np.abs(ca / na - cb / nb)
    return diff[..., last_of_tie].max(axis=-1)


def ks_distance(sample_a, sample_b, n_perm: int = 1000, rng=None, batch: int = 50):
    """Two-sample KS statistic and permutation p-value (1 + #{perm >= obs}) / (1 + n_perm)."""
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    na, nb = a.size, b.size
    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="stable")
    z = pooled[order]
    last = np.flatnonzero(np.append(z[1:] != z[:-1], True))
    labels = np.concatenate([np.ones(na), np.zeros(nb)])
    obs = float(_ks_stat_sorted(labels[order], last, na, nb))
    if n_perm <= 0:
        return obs, math.nan
    rng = _as_rng(rng)
    hits = 0
    done = 0
    while done < n_perm:
        m = min(batch, n_perm - done)
        perm = rng.permuted(np.broadcast_to(labels, (m, labels.size)), axis=1)
        stat = _ks_stat_sorted(perm, last, na, nb)
        hits += int(np.sum(stat >= obs - 1e-12))
        done += m
    return obs, (1 + hits) / (1 + n_perm)


def fit_scale_by_quantile(data, kappa: float, q: float = 0.9, n_ref: int = 200_000, rng=None) -> float:
    """Scale c such that the q-quantile of c * S(kappa, unit) matches the data.

    Works for centred data whose q-quantile is positive.
    """
    ref = sample_stable(StableParams(kappa), n_ref, rng)
    rq = float(np.quantile(ref, q))
    dq = float(np.quantile(np.asarray(data, dtype=float), q))
    if rq <= 0 or dq <= 0:
        raise InsufficientDataError("quantile matching needs positive upper quantiles")
    return dq / rq
