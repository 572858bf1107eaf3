"""Traps, the time spent in them, and the partially forgotten walk.

A trap is an undirected lattice edge {x, y} with omega(x, y) + omega(y, x) > 3/2.
Each vertex lies in at most one trap, so a trap set is stored as a map
``partner`` from every trap endpoint to the other endpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from rwde.dirichlet import ParameterDomainError, Weights, _as_rng, log_gamma_variates
from rwde.lattice import Box, step_index, unit_steps
from rwde.walk import InsufficientDataError

TRAP_THRESHOLD = 1.5


def strength(omega_xy, omega_yx):
    """(p_f, s_f) = (omega_xy * omega_yx, 1 / (2 - omega_xy - omega_yx))."""
    a = np.asarray(omega_xy, dtype=float)
    b = np.asarray(omega_yx, dtype=float)
    return a * b, 1.0 / ((1.0 - a) + (1.0 - b))


def is_trap(omega_xy, omega_yx):
    return np.asarray(omega_xy) + np.asarray(omega_yx) > TRAP_THRESHOLD


@dataclass
class TrapSet:
    """Traps of one environment, restricted to the vertices that were inspected."""

    partner: dict = field(default_factory=dict)
    omega: dict = field(default_factory=dict)  # (u, v) -> omega(u, v) for trap edges, both ways

    def edge(self, v):
        w = self.partner.get(v)
        return None if w is None else frozenset((v, w))

    def edges(self) -> set:
        return {frozenset((v, w)) for v, w in self.partner.items()}

    def add(self, x, y, oxy, oyx):
        if x in self.partner or y in self.partner:
            raise AssertionError(f"vertex shared by two traps near {x}, {y}")
        self.partner[x] = y
        self.partner[y] = x
        self.omega[(x, y)] = float(oxy)
        self.omega[(y, x)] = float(oyx)

    def strength_of(self, f) -> tuple[float, float]:
        x, y = sorted(f)
        p, s = strength(self.omega[(x, y)], self.omega[(y, x)])
        return float(p), float(s)


def _scan(env, vertices, pairs_within=None) -> TrapSet:
    """Trap edges incident to ``vertices`` (an (n, d) array of distinct vertices).

    With ``pairs_within`` set, only edges whose two endpoints are both in
    ``vertices`` are considered.
    """
    vertices = np.asarray(vertices, dtype=np.int64)
    n, d = vertices.shape
    steps = unit_steps(d)
    nbrs = (vertices[:, None, :] + steps[None, :, :]).reshape(-1, d)
    everything = np.unique(np.vstack([vertices, nbrs]), axis=0)
    P = env.env_batch(everything)
    index = {tuple(r): i for i, r in enumerate(everything.tolist())}
    vi = np.array([index[tuple(r)] for r in vertices.tolist()])
    ni = np.array([index[tuple(r)] for r in nbrs.tolist()]).reshape(n, 2 * d)
    ts = TrapSet()
    inside = None if pairs_within is None else {tuple(r) for r in vertices.tolist()}
    for i in range(d):
        # forward edges x -> x + e_i, each undirected edge seen once from its lower end
        out = P[vi, i]
        back = P[ni[:, i], i + d]
        hit = np.flatnonzero(out + back > TRAP_THRESHOLD)
        for k in hit:
            x = tuple(vertices[k].tolist())
            y = tuple((vertices[k] + steps[i]).tolist())
            if inside is not None and y not in inside:
                continue
            if x in ts.partner and ts.partner[x] == y:
                continue
            ts.add(x, y, out[k], back[k])
        # backward edges whose lower end was not listed among ``vertices``
        if inside is None:
            out_b = P[vi, i + d]
            back_b = P[ni[:, i + d], i]
            for k in np.flatnonzero(out_b + back_b > TRAP_THRESHOLD):
                y = tuple(vertices[k].tolist())
                x = tuple((vertices[k] - steps[i]).tolist())
                if ts.partner.get(y) == x:
                    continue
                ts.add(x, y, back_b[k], out_b[k])
    return ts


def find_traps(env, region: Box) -> set:
    """All trap edges with both endpoints in ``region``."""
    return _scan(env, region.vertices(), pairs_within=True).edges()


def traps_along(env, positions) -> TrapSet:
    """Every trap having an endpoint among the visited ``positions``."""
    verts = np.unique(np.asarray(positions, dtype=np.int64), axis=0)
    return _scan(env, verts)


# two-vertex Monte Carlo


def complement_pairs(weights: Weights, j: int, n: int, rng):
    """(1 - omega(x, x+e_j), 1 - omega(x+e_j, x)) for n independent edges.

    Both complements are Beta marginals of independent Dirichlet vectors;
    they are drawn as Gamma ratios in log space so that they keep full
    relative precision near 0 (that is where the strength is large).
    """
    rng = _as_rng(rng)
    a = weights.alphas
    d = weights.d
    tot = weights.total

    def comp(alpha_edge):
        lg_e = log_gamma_variates(alpha_edge, n, rng)
        lg_r = log_gamma_variates(tot - alpha_edge, n, rng)
        # rest / (edge + rest)
        return 1.0 / (1.0 + np.exp(lg_e - lg_r))

    return comp(a[j - 1]), comp(a[j - 1 + d])


def wilson_interval(k, n, z=1.959963984540054):
    k = np.asarray(k, dtype=float)
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return centre - half, centre + half


@dataclass
class StrengthTail:
    A: np.ndarray
    tail: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    counts: np.ndarray
    n: int
    slope: float | None
    slope_se: float | None
    zero_tail: bool


def trap_strength_tail(weights: Weights, j: int, A_grid, n_samples: int, rng=None,
                       chunk: int = 1 << 20, fit_range=None) -> StrengthTail:
    """Empirical P(s_f >= A) for edges in direction j, with Wilson intervals.

    The log-log slope is a weighted least-squares fit over grid points with
    at least one exceedance (and inside ``fit_range`` when given).
    """
    A = np.asarray(A_grid, dtype=float)
    if np.any(A < 2):
        raise ParameterDomainError("strength thresholds must be >= 2")
    if not 1 <= j <= weights.d:
        raise ParameterDomainError(f"direction {j} outside 1..{weights.d}")
    rng = _as_rng(rng)
    counts = np.zeros(len(A), dtype=np.int64)
    thresholds = 1.0 / A
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        qx, qy = complement_pairs(weights, j, m, rng)
        r = np.sort(qx + qy)
        counts += np.searchsorted(r, thresholds, side="right")
        done += m
    tail = counts / n_samples
    lo, hi = wilson_interval(counts, n_samples)
    ok = counts > 0
    if fit_range is not None:
        ok &= (A >= fit_range[0]) & (A <= fit_range[1])
    slope = se = None
    if ok.sum() >= 2:
        x = np.log(A[ok])
        y = np.log(tail[ok])
        w = counts[ok].astype(float)  # var(log p_hat) ~ 1/k
        X = np.column_stack([np.ones_like(x), x])
        W = np.diag(w)
        cov = np.linalg.inv(X.T @ W @ X)
        beta = cov @ X.T @ W @ y
        slope = float(beta[1])
        se = float(math.sqrt(cov[1, 1]))
    return StrengthTail(A, tail, lo, hi, counts, n_samples, slope, se, bool(counts[-1] == 0))


# T_1 decomposition


@dataclass
class TrapRecord:
    x: tuple  # endpoint where the walk first hit the trap
    y: tuple
    j: int
    p: float
    s: float
    n_xx: int = 0
    n_xy: int = 0
    n_yx: int = 0
    n_yy: int = 0
    visit_lengths: list = field(default_factory=list)
    completed: int = 0  # visits that exit to a vertex off the edge at or before T_1

    @property
    def n_visits(self) -> int:
        return self.n_xx + self.n_xy + self.n_yx + self.n_yy

    @property
    def time(self) -> int:
        return self.n_visits + sum(self.visit_lengths)

    def configuration(self) -> Configuration:
        return Configuration(self.j, self.n_xx, self.n_xy, self.n_yx, self.n_yy)

    def as_row(self) -> dict:
        return {"x": self.x, "y": self.y, "j": self.j, "p": self.p, "s": self.s,
                "n_xx": self.n_xx, "n_xy": self.n_xy, "n_yx": self.n_yx, "n_yy": self.n_yy,
                "lengths": list(self.visit_lengths)}


@dataclass(frozen=True)
class Configuration:
    j: int
    n_xx: int
    n_xy: int
    n_yx: int
    n_yy: int

    @property
    def n_visits(self) -> int:
        return self.n_xx + self.n_xy + self.n_yx + self.n_yy

    @property
    def n_prime_x(self) -> int:
        return self.n_xx + self.n_yx

    @property
    def n_prime_y(self) -> int:
        return self.n_xy + self.n_yy


@dataclass
class T1Decomposition:
    T1_total: int
    T1_out: int
    T1_in: int
    traps: list  # TrapRecord, in order of first visit
    buckets: dict = field(default_factory=dict)

    def check(self) -> bool:
        return (self.T1_total == self.T1_out + self.T1_in
                and self.T1_in == sum(r.time for r in self.traps))

    def strict_traps(self) -> list:
        """Traps with at least one visit that leaves the edge by time T_1."""
        return [r for r in self.traps if r.completed > 0]


def _direction(x, y) -> int:
    return step_index(x, y) % len(x) + 1


def decompose_T1(positions, T1: int, traps: TrapSet, h: float | None = None,
                 m: int | None = None) -> T1Decomposition:
    """Split T_1 into time outside traps and visits to each trap.

    Only X_0..X_{T_1 - 1} are used.  A visit is a maximal run of times in
    the same trap; a run still inside the trap at time T_1 - 1 is closed
    there, so that T_1 = T_1_out + sum_f (N_f + sum_j l_f^j) exactly.
    Visit lengths l_f^j are evaluated by the indicator sum (steps taken
    inside f after entering it).
    """
    pos = np.asarray(positions, dtype=np.int64)
    if T1 < 0 or len(pos) < T1 + 1:
        raise ParameterDomainError(f"trace of length {len(pos) - 1} is shorter than T_1={T1}")
    pts = [tuple(r) for r in pos[: T1 + 1].tolist()]
    records: dict = {}
    order = []
    out = 0
    i = 0
    while i < T1:
        v = pts[i]
        f = traps.edge(v)
        if f is None:
            out += 1
            i += 1
            continue
        # l = #{k >= 0 : X_{i+1..i+k+1} all in f}, truncated at T_1 - 1
        ell = 0
        while i + ell + 1 <= T1 - 1 and pts[i + ell + 1] in f:
            ell += 1
        exit_v = pts[i + ell]
        rec = records.get(f)
        if rec is None:
            y = traps.partner[v]
            p, s = traps.strength_of(f)
            rec = records[f] = TrapRecord(v, y, _direction(v, y), p, s)
            order.append(f)
        key = ("n_x" if v == rec.x else "n_y") + ("x" if exit_v == rec.x else "y")
        setattr(rec, key, getattr(rec, key) + 1)
        rec.visit_lengths.append(ell)
        if pts[i + ell + 1] not in f:
            rec.completed += 1
        i += ell + 1
    trap_list = [records[f] for f in order]
    t_in = sum(r.time for r in trap_list)
    dec = T1Decomposition(T1, out, t_in, trap_list)
    if h is not None and m is not None:
        dec.buckets = time_buckets(trap_list, h, m)
    return dec


def time_buckets(records, h: float, m: int) -> dict:
    """Trap visit time split by strength threshold h and visit count threshold m."""
    weak = few = many = 0
    visits = 0
    for r in records:
        t = sum(r.visit_lengths)
        visits += r.n_visits
        if r.s <= h:
            weak += t
        elif r.n_visits <= m:
            few += t
        else:
            many += t
    return {"visits": visits, "weak": weak, "strong_few": few, "strong_many": many}


def default_eps_m(kappa: float, eps: float = 0.1, eta: float | None = None) -> tuple[float, int]:
    """(eps, m(eps)) with m = floor(eps^(-(kappa + 1) / eta)), eta defaulting to kappa + 0.1."""
    eta = kappa + 0.1 if eta is None else eta
    return eps, int(math.floor(eps ** (-(kappa + 1.0) / eta)))


# partially forgotten walk


@dataclass
class ForgottenWalk:
    t: list
    path: list
    trimmed: bool  # the trace ended inside a trap and the partial visit was dropped


def forget(positions, traps: TrapSet, closed_end: bool = False) -> ForgottenWalk:
    """Erase back-and-forths inside traps.

    Follows the (t_i, s_i) recursion: from a trap endpoint, s_i is the last
    time of the current visit to that trap, and the next kept time is s_i
    itself when the visit exits through the other endpoint, s_i + 1 when it
    exits where it entered.  With ``closed_end`` a visit still running at
    the final time is treated as exiting there.
    """
    pts = [tuple(r) for r in np.asarray(positions, dtype=np.int64).tolist()]
    last = len(pts) - 1
    t = []
    i = 0
    trimmed = False
    while i <= last:
        f = traps.edge(pts[i])
        if f is None:
            t.append(i)
            i += 1
            continue
        s = i
        while s < last and pts[s + 1] in f:
            s += 1
        if s == last and not closed_end:
            trimmed = True
            break
        t.append(i)
        if pts[s] == pts[i]:
            i = s + 1
        else:
            t.append(s)
            i = s + 1
    return ForgottenWalk(t, [pts[k] for k in t], trimmed)


def configuration(positions, f, traps: TrapSet, closed_end: bool = False) -> Configuration:
    """Configuration of trap f read off the partially forgotten path.

    x is the endpoint where the path first meets f.  A forgotten visit is
    either a single point u (entered and left at u) or a pair u, v (crossed).
    """
    f = frozenset(tuple(v) for v in f)
    fw = forget(positions, traps, closed_end=closed_end)
    path = fw.path
    x = None
    counts = {"xx": 0, "xy": 0, "yx": 0, "yy": 0}
    k = 0
    while k < len(path):
        u = path[k]
        if u not in f:
            k += 1
            continue
        if x is None:
            x = u
        v = traps.partner[u]
        if k + 1 < len(path) and path[k + 1] == v:
            exit_v, k = v, k + 2
        else:
            exit_v, k = u, k + 1
        counts[("x" if u == x else "y") + ("x" if exit_v == x else "y")] += 1
    if x is None:
        raise ParameterDomainError(f"trap {sorted(f)} is never visited")
    y = traps.partner[x]
    return Configuration(_direction(x, y), counts["xx"], counts["xy"], counts["yx"], counts["yy"])


# conditional trap law given a configuration


def _visit_likelihood(c: Configuration, qx, qy):
    """Product over visits of P(visit exits as recorded | omega), qx = 1 - omega(x,y), qy = 1 - omega(y,x)."""
    a = 1.0 - qx
    b = 1.0 - qy
    one_minus_p = qx + qy - qx * qy
    lx = qx / one_minus_p
    lxy = a * qy / one_minus_p
    ly = qy / one_minus_p
    lyx = b * qx / one_minus_p
    return lx ** c.n_xx * lxy ** c.n_xy * lyx ** c.n_yx * ly ** c.n_yy


def _truncated_complements(weights, c: Configuration, upper, n, rng, x_is_lower):
    """Draws of (qx, qy) from their prior restricted to [0, upper]^2 plus the box mass."""
    a = weights.alphas
    d = weights.d
    tot = weights.total
    fwd, bwd = a[c.j - 1], a[c.j - 1 + d]
    if not x_is_lower:
        fwd, bwd = bwd, fwd
    # q = 1 - omega(edge) ~ Beta(tot - alpha(edge), alpha(edge))
    laws = [stats.beta(tot - fwd, fwd), stats.beta(tot - bwd, bwd)]
    out = []
    mass = 1.0
    for law in laws:
        top = law.cdf(upper)
        u = rng.random(n)
        q = law.ppf(u * top)
        out.append(np.clip(q, 1e-300, upper))
        mass *= top
    return out[0], out[1], mass


def _excursion_total(c: Configuration, qx, qy, rng):
    """Sum of visit lengths given the omegas: 2B per returning visit, 2B + 1 per crossing."""
    one_minus_p = qx + qy - qx * qy
    total = np.zeros(len(qx))
    for reps, odd in ((c.n_xx, 0), (c.n_yy, 0), (c.n_xy, 1), (c.n_yx, 1)):
        for _ in range(reps):
            b = rng.geometric(np.clip(one_minus_p, 1e-300, 1.0)) - 1
            total += 2 * b + odd
    return total


@dataclass
class ConditionalTail:
    x: np.ndarray
    tail: np.ndarray
    stderr: np.ndarray
    scaled: np.ndarray  # x^kappa_j * tail
    kappa_j: float
    empty: bool


def trap_time_tail_given_config(weights: Weights, config: Configuration, eps: float, x_grid,
                                n_samples: int, rng=None, x_is_lower: bool = True) -> ConditionalTail:
    """P(sum_j l_f^j >= x, s_f >= eps x | configuration) by importance sampling.

    The trap law given the forgotten walk is the two-vertex prior restricted
    to trap-hood and reweighted by the probability of each recorded visit
    (enter at u, leave at v).  Draws are taken on the region s_f >= eps x,
    where the density is explicit, and normalised by the same weight
    integrated over all traps.
    """
    if config.n_visits < 1:
        raise ParameterDomainError("configuration must record at least one visit")
    if not eps > 0:
        raise ParameterDomainError("eps must be positive")
    rng = _as_rng(rng)
    kj = _kappa_j(weights, config.j)
    qx, qy, mass = _truncated_complements(weights, config, 0.5, n_samples, rng, x_is_lower)
    w = mass * (qx + qy < 0.5) * _visit_likelihood(config, qx, qy)
    Z = w.mean()
    if Z == 0:
        raise InsufficientDataError("no trap draw carries positive weight")
    xs = np.asarray(x_grid, dtype=float)
    tail = np.empty(len(xs))
    se = np.empty(len(xs))
    for k, x in enumerate(xs):
        cap = min(0.5, 1.0 / (eps * x))
        qx, qy, mass = _truncated_complements(weights, config, cap, n_samples, rng, x_is_lower)
        keep = (qx + qy <= cap) & (qx + qy < 0.5)
        lengths = _excursion_total(config, qx, qy, rng)
        vals = mass * keep * _visit_likelihood(config, qx, qy) * (lengths >= x)
        tail[k] = vals.mean() / Z
        se[k] = vals.std(ddof=1) / math.sqrt(n_samples) / Z
    return ConditionalTail(xs, tail, se, xs ** kj * tail, kj, bool(np.all(tail == 0)))


def conditional_strength_tail(weights: Weights, config: Configuration, A_grid, n_samples: int,
                              rng=None, x_is_lower: bool = True):
    """P(s_f >= A | configuration) and its standard error, A >= 2."""
    rng = _as_rng(rng)
    qx, qy, mass = _truncated_complements(weights, config, 0.5, n_samples, rng, x_is_lower)
    Z = (mass * (qx + qy < 0.5) * _visit_likelihood(config, qx, qy)).mean()
    A = np.asarray(A_grid, dtype=float)
    tail = np.empty(len(A))
    se = np.empty(len(A))
    for k, a in enumerate(A):
        cap = 1.0 / a
        qx, qy, mass = _truncated_complements(weights, config, cap, n_samples, rng, x_is_lower)
        vals = mass * (qx + qy <= cap) * _visit_likelihood(config, qx, qy)
        tail[k] = vals.mean() / Z
        se[k] = vals.std(ddof=1) / math.sqrt(n_samples) / Z
    return tail, se


@dataclass
class EnvelopeCheck:
    A: np.ndarray
    tail: np.ndarray
    stderr: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    D_hat: float
    inside: np.ndarray


def quasi_independence_check(weights: Weights, config: Configuration, A_grid, n_samples: int,
                             rng=None, n_sigma: float = 4.0) -> EnvelopeCheck:
    """Compare P(s >= A | c) with D A^-kappa_j exp(+-5 (N_f + 2 alpha_0) / (2A)).

    alpha_0 is the total weight sum(alpha).  D is fitted as the geometric
    mean of tail * A^kappa_j; a point is inside when its interval of
    ``n_sigma`` standard errors meets the envelope.
    """
    A = np.asarray(A_grid, dtype=float)
    tail, se = conditional_strength_tail(weights, config, A, n_samples, rng)
    kj = _kappa_j(weights, config.j)
    D = float(np.exp(np.mean(np.log(tail * A ** kj))))
    slack = 5.0 * (config.n_visits + 2.0 * weights.total) / (2.0 * A)
    lo = D * A ** -kj * np.exp(-slack)
    hi = D * A ** -kj * np.exp(slack)
    inside = (tail + n_sigma * se >= lo) & (tail - n_sigma * se <= hi)
    return EnvelopeCheck(A, tail, se, lo, hi, D, inside)


def _kappa_j(weights: Weights, j: int) -> float:
    a = weights.alphas
    return 2.0 * weights.total - (a[j - 1] + a[j - 1 + weights.d])


# geometric moments


@dataclass
class GeometricMoments:
    p: np.ndarray
    beta: np.ndarray
    estimate: np.ndarray  # [beta, p]: E[N^beta] p^beta
    stderr: np.ndarray
    sup_over_p: np.ndarray


def geometric_moment_check(p_grid, beta_grid, n_samples: int, rng=None) -> GeometricMoments:
    """MC estimates of E[N^beta] p^beta for N ~ Geometric(p) on {1, 2, ...}."""
    rng = _as_rng(rng)
    p = np.asarray(p_grid, dtype=float)
    b = np.asarray(beta_grid, dtype=float)
    if np.any((p <= 0) | (p >= 1)) or np.any(b <= 0):
        raise ParameterDomainError("need p in (0, 1) and beta > 0")
    est = np.empty((len(b), len(p)))
    se = np.empty_like(est)
    for k, pk in enumerate(p):
        N = rng.geometric(pk, n_samples).astype(float)
        for i, bi in enumerate(b):
            vals = (N * pk) ** bi
            est[i, k] = vals.mean()
            se[i, k] = vals.std(ddof=1) / math.sqrt(n_samples)
    return GeometricMoments(p, b, est, se, est.max(axis=1))
