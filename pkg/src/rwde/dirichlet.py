"""Dirichlet weights, sampling, kappa exponents and moment calculus."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from rwde._philox import TINY

if TYPE_CHECKING:
    from rwde.graph import FiniteGraph


class ParameterDomainError(ValueError):
    """A parameter lies outside the domain where the law is defined."""


@dataclass(frozen=True)
class Weights:
    """Edge weights (alpha_1..alpha_2d) of a translation-invariant Dirichlet environment.

    ``alphas[i]`` weights the step +e_{i+1} for i < d and -e_{i+1-d} otherwise.
    """

    alphas: tuple[float, ...]

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        object.__setattr__(self, "alphas", alphas)
        if len(alphas) == 0 or len(alphas) % 2:
            raise ParameterDomainError(f"need 2d weights, got {len(alphas)}")
        if not all(a > 0 and math.isfinite(a) for a in alphas):
            raise ParameterDomainError(f"weights must be positive and finite: {alphas}")

    @property
    def d(self) -> int:
        return len(self.alphas) // 2

    @property
    def total(self) -> float:
        return math.fsum(self.alphas)

    def direction(self, i: int) -> tuple[int, ...]:
        """Unit vector of step index ``i`` (0-based)."""
        d = self.d
        v = [0] * d
        v[i % d] = 1 if i < d else -1
        return tuple(v)


@dataclass(frozen=True)
class KappaReport:
    kappa_j: tuple[float, ...]
    kappa: float
    d_alpha: tuple[float, ...]
    sum_alpha: float
    asymmetry: float
    condition_t: bool


def kappa_report(w: Weights) -> KappaReport:
    """kappa_j = 2*sum(alpha) - (alpha_j + alpha_{j+d}), kappa = min_j kappa_j, drift d_alpha.

    kappa_j is evaluated as the exactly rounded sum of the weights of the
    edges leaving {0, e_j}, which is the same multiset as the closed form;
    this makes it bit-identical to the cut value computed on a lattice graph.
    """
    a = w.alphas
    d = w.d
    kj = []
    for j in range(d):
        leaving = [a[i] for i in range(2 * d) if i != j] + [a[i] for i in range(2 * d) if i != j + d]
        kj.append(math.fsum(leaving))
    drift = tuple(a[j] - a[j + d] for j in range(d))
    asym = math.fsum(abs(x) for x in drift)
    return KappaReport(
        kappa_j=tuple(kj),
        kappa=min(kj),
        d_alpha=drift,
        sum_alpha=w.total,
        asymmetry=asym,
        condition_t=asym > 1.0,
    )


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def log_gamma_variates(shape: float, n: int, rng) -> np.ndarray:
    """log of n Gamma(shape, 1) draws.

    Marsaglia-Tsang squeeze/rejection; for shape < 1 the draw is boosted
    from shape+1 by U**(1/shape), applied in log space so that tiny shapes
    (0.05 and below) never underflow.
    """
    if not shape > 0:
        raise ParameterDomainError(f"gamma shape must be positive, got {shape}")
    rng = _as_rng(rng)
    if shape < 1.0:
        u = 1.0 - rng.random(n)
        return log_gamma_variates(shape + 1.0, n, rng) + np.log(u) / shape
    dd = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * dd)
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        m = todo.size
        x = rng.standard_normal(m)
        v = 1.0 + c * x
        pos = v > 0
        v = np.where(pos, v, 1.0) ** 3
        u = 1.0 - rng.random(m)
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = pos & (
                (u < 1.0 - 0.0331 * x**4)
                | (np.log(u) < 0.5 * x * x + dd * (1.0 - v + np.log(v)))
            )
        out[todo[accept]] = np.log(dd * v[accept])
        todo = todo[~accept]
    return out


def simplex_normalize(logs: np.ndarray) -> np.ndarray:
    """Rows of log-weights -> simplex points with no zero entry.

    The largest entry of each row is set to 1 minus the left-to-right sum
    of the others, so summing the others in order and then adding it gives
    exactly 1.0.
    """
    logs = np.atleast_2d(np.asarray(logs, dtype=float))
    w = np.exp(logs - logs.max(axis=1, keepdims=True))
    tot = np.zeros(w.shape[0])
    for i in range(w.shape[1]):
        tot += w[:, i]
    p = np.maximum(w / tot[:, None], TINY)
    m = p.argmax(axis=1)
    rest = np.zeros(p.shape[0])
    for i in range(p.shape[1]):
        rest += np.where(m == i, 0.0, p[:, i])
    p[np.arange(p.shape[0]), m] = 1.0 - rest
    return p


def simplex_sum(p) -> float:
    """Sum of a simplex vector in the order that ``simplex_normalize`` makes exact."""
    p = [float(x) for x in p]
    m = max(range(len(p)), key=lambda i: (p[i], -i))
    s = 0.0
    for i, x in enumerate(p):
        if i != m:
            s += x
    return s + p[m]


def sample_dirichlet(alphas, rng, size: int | None = None) -> np.ndarray:
    """Draw from D(alphas) by normalising independent Gamma variates.

    Returns shape (k,) when ``size`` is None, else (size, k).
    """
    alphas = [float(a) for a in np.atleast_1d(alphas)]
    if not alphas or not all(a > 0 and math.isfinite(a) for a in alphas):
        raise ParameterDomainError(f"Dirichlet parameters must be positive: {alphas}")
    rng = _as_rng(rng)
    n = 1 if size is None else int(size)
    if len(alphas) == 1:
        out = np.ones((n, 1))
    else:
        logs = np.column_stack([log_gamma_variates(a, n, rng) for a in alphas])
        out = simplex_normalize(logs)
    return out[0] if size is None else out


def _edge_array(graph: FiniteGraph, xi) -> np.ndarray:
    if isinstance(xi, dict):
        arr = np.zeros(len(graph.edges))
        for e, v in xi.items():
            arr[e] = v
        return arr
    arr = np.asarray(xi, dtype=float)
    if arr.shape != (len(graph.edges),):
        raise ValueError(f"xi must have one entry per edge ({len(graph.edges)}), got {arr.shape}")
    return arr


def log_partition(graph: FiniteGraph, theta) -> float:
    """log Z_theta = sum_e lgamma(theta_e) - sum_x lgamma(theta_x) over vertices with out-edges."""
    theta = _edge_array(graph, theta)
    acc = math.fsum(math.lgamma(t) for t in theta)
    per_vertex = np.zeros(len(graph.vertices))
    np.add.at(per_vertex, graph.tails, theta)
    has_out = np.bincount(graph.tails, minlength=len(graph.vertices)) > 0
    return acc - math.fsum(math.lgamma(t) for t in per_vertex[has_out])


def log_joint_moment(graph: FiniteGraph, xi) -> float:
    """log E^(alpha)[prod_e omega(e)^xi(e)]; +inf when some alpha+xi <= 0."""
    xi = _edge_array(graph, xi)
    alpha = graph.weights
    shifted = alpha + xi
    if np.any(shifted <= 0):
        return math.inf
    if not np.any(xi):
        return 0.0
    return log_partition(graph, shifted) - log_partition(graph, alpha)


def joint_moment(graph: FiniteGraph, xi) -> float:
    """Z_{alpha+xi} / Z_alpha; ``math.inf`` marks an infinite moment."""
    lm = log_joint_moment(graph, xi)
    return math.inf if lm == math.inf else math.exp(lm)


def measure_change_weight(graph: FiniteGraph, xi, omega) -> float:
    """dP^(alpha)/dP^(alpha+xi) at omega = (Z_{alpha+xi}/Z_alpha) prod omega(e)^(-xi(e)).

    With the density prod omega^(theta-1) / Z_theta this is the exact
    likelihood ratio, so the weight has unit mean under P^(alpha+xi).
    Returns ``math.inf`` when some omega(e) = 0 carries xi(e) > 0.
    """
    xi = _edge_array(graph, xi)
    if np.any(graph.weights + xi <= 0):
        raise ParameterDomainError("alpha + xi must be positive on every edge")
    om = np.asarray(getattr(omega, "probs", omega), dtype=float)
    if not np.any(xi):
        return 1.0
    if np.any((om == 0) & (xi > 0)):
        return math.inf
    mask = xi != 0
    with np.errstate(divide="ignore"):
        log_w = (log_partition(graph, graph.weights + xi) - log_partition(graph, graph.weights)
                 - math.fsum(xi[mask] * np.log(om[mask])))
    if log_w > 709.0:
        return math.inf
    return math.exp(log_w)
