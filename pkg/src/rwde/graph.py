"""Finite directed weighted multigraphs carrying Dirichlet environments.

Parallel edges are kept as separate entries of the edge list; nothing is
ever merged, so contraction bookkeeping stays exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from rwde.dirichlet import ParameterDomainError, Weights, sample_dirichlet

CEMETERY = "∂"
DENSE_LIMIT = 2000
ENUMERATION_BUDGET = 10**6


class GraphDomainError(ValueError):
    """Operation precondition on a graph does not hold."""


class ReducibleChainError(GraphDomainError):
    def __init__(self, component):
        self.component = component
        super().__init__(f"chain is not irreducible; non-communicating class: {sorted(map(str, component))}")


class EnumerationBudgetError(RuntimeError):
    """Connected-set enumeration exceeded its candidate budget."""


class FiniteGraph:
    """Directed multigraph with positive edge weights.

    ``edges`` is a list of (tail, head, weight); vertices are arbitrary
    hashable labels.  The label ``CEMETERY`` may be used for an absorbing
    vertex without outgoing edges.
    """

    def __init__(self, edges, vertices=None):
        edges = [(t, h, float(w)) for t, h, w in edges]
        for t, h, w in edges:
            if not w > 0:
                raise ParameterDomainError(f"edge {t}->{h} has non-positive weight {w}")
        if vertices is None:
            vertices = []
            seen = set()
            for t, h, _ in edges:
                for v in (t, h):
                    if v not in seen:
                        seen.add(v)
                        vertices.append(v)
        self.vertices = list(vertices)
        self.index = {v: i for i, v in enumerate(self.vertices)}
        if len(self.index) != len(self.vertices):
            raise ValueError("duplicate vertex labels")
        self.edges = edges
        self.tails = np.array([self.index[t] for t, _, _ in edges], dtype=np.int64)
        self.heads = np.array([self.index[h] for _, h, _ in edges], dtype=np.int64)
        self.weights = np.array([w for _, _, w in edges])
        self._out = [[] for _ in self.vertices]
        self._in = [[] for _ in self.vertices]
        for e, (t, h) in enumerate(zip(self.tails, self.heads)):
            self._out[t].append(e)
            self._in[h].append(e)
        if CEMETERY in self.index and self._out[self.index[CEMETERY]]:
            raise GraphDomainError("the cemetery vertex must not have outgoing edges")

    def __repr__(self):
        return f"FiniteGraph(|V|={len(self.vertices)}, |E|={len(self.edges)})"

    def out_edges(self, v):
        return self._out[self.index[v]]

    def in_edges(self, v):
        return self._in[self.index[v]]

    def neighbours(self, v):
        """Undirected neighbourhood of ``v``."""
        i = self.index[v]
        idx = {int(self.heads[e]) for e in self._out[i]} | {int(self.tails[e]) for e in self._in[i]}
        idx.discard(i)
        return [self.vertices[j] for j in sorted(idx)]

    def vertex_weight(self, v) -> float:
        return math.fsum(self.weights[e] for e in self.out_edges(v))

    def reversed(self) -> FiniteGraph:
        return FiniteGraph([(h, t, w) for t, h, w in self.edges], vertices=self.vertices)

    def is_connected(self, vertex_set) -> bool:
        vs = set(vertex_set)
        if not vs:
            return False
        start = next(iter(vs))
        seen = {start}
        stack = [start]
        while stack:
            v = stack.pop()
            for w in self.neighbours(v):
                if w in vs and w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen == vs


# edge-list text format: one "tail head weight" line per edge, '#' comments


def _parse_label(tok: str):
    try:
        return int(tok)
    except ValueError:
        return tok


def read_edgelist(path) -> FiniteGraph:
    edges = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'tail head weight', got {line!r}")
        edges.append((_parse_label(parts[0]), _parse_label(parts[1]), float(parts[2])))
    return FiniteGraph(edges)


def write_edgelist(g: FiniteGraph, path) -> None:
    lines = [f"{t} {h} {w!r}" for t, h, w in g.edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class EnvironmentOnGraph:
    """Transition probabilities ``probs[e]`` aligned with ``graph.edges``."""

    graph: FiniteGraph
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != (len(self.graph.edges),):
            raise ValueError("one probability per edge required")
        if np.any(self.probs < 0):
            raise ValueError("negative transition probability")
        for i, es in enumerate(self.graph._out):
            if es and abs(math.fsum(self.probs[es]) - 1.0) > 1e-9:
                raise ValueError(f"probabilities out of {self.graph.vertices[i]!r} do not sum to 1")

    def matrix(self) -> np.ndarray:
        n = len(self.graph.vertices)
        P = np.zeros((n, n))
        np.add.at(P, (self.graph.tails, self.graph.heads), self.probs)
        return P

    def sparse_matrix(self) -> sp.csr_matrix:
        n = len(self.graph.vertices)
        return sp.csr_matrix((self.probs, (self.graph.tails, self.graph.heads)), shape=(n, n))


def sample_environment(g: FiniteGraph, rng) -> EnvironmentOnGraph:
    """Independent Dirichlet vector at every vertex with outgoing edges."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    probs = np.zeros(len(g.edges))
    for es in g._out:
        if es:
            probs[es] = sample_dirichlet(g.weights[es], rng)
    return EnvironmentOnGraph(g, probs)


def sample_environments(g: FiniteGraph, rng, n: int) -> np.ndarray:
    """n environments at once, shape (n, |E|)."""
    probs = np.zeros((n, len(g.edges)))
    for es in g._out:
        if es:
            probs[:, es] = sample_dirichlet(g.weights[es], rng, size=n)
    return probs


def divergence(g: FiniteGraph, x) -> float:
    """Outgoing minus incoming weight at ``x``."""
    w = g.weights
    return math.fsum([*w[g.out_edges(x)], *(-w[g.in_edges(x)])])


def divergence_vector(g: FiniteGraph) -> dict:
    return {v: divergence(g, v) for v in g.vertices}


def contract(g: FiniteGraph, f, label="x_f") -> FiniteGraph:
    """Merge the connected vertex set ``f`` into the single vertex ``label``.

    Edges inside ``f`` are dropped; every edge with exactly one endpoint in
    ``f`` is kept with its weight, so parallel edges may appear.
    """
    f = set(f)
    if not f or not f <= set(g.vertices):
        raise GraphDomainError("contracted set must be a non-empty subset of the vertices")
    if not g.is_connected(f):
        raise GraphDomainError(f"contracted set is not connected: {sorted(map(str, f))}")
    if label in g.index and label not in f:
        raise GraphDomainError(f"label {label!r} already used")
    edges = []
    for t, h, w in g.edges:
        ti, hi = t in f, h in f
        if ti and hi:
            continue
        edges.append((label if ti else t, label if hi else h, w))
    vertices = [v for v in g.vertices if v not in f] + [label]
    return FiniteGraph(edges, vertices=vertices)


def _check_irreducible(g: FiniteGraph, omega: EnvironmentOnGraph):
    P = omega.sparse_matrix()
    P.data[P.data <= 0] = 0
    P.eliminate_zeros()
    n, labels = connected_components(P, directed=True, connection="strong")
    if n > 1:
        # report a closed class (no probability leaks out), or else any class
        for c in range(n):
            members = np.flatnonzero(labels == c)
            rows = P[members]
            if np.all(np.isin(rows.indices, members)):
                raise ReducibleChainError([g.vertices[i] for i in members])
        raise ReducibleChainError([g.vertices[i] for i in np.flatnonzero(labels == 0)])


def invariant_measure(g: FiniteGraph, omega: EnvironmentOnGraph, check=True) -> np.ndarray:
    """Stationary probability vector pi (pi P = pi, sum pi = 1), indexed like ``g.vertices``."""
    if check:
        _check_irreducible(g, omega)
    n = len(g.vertices)
    if n == 1:
        return np.ones(1)
    if n <= DENSE_LIMIT:
        A = omega.matrix().T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = scipy.linalg.solve(A, b)
    else:
        A = (omega.sparse_matrix().T - sp.identity(n)).tolil()
        A[n - 1, :] = np.ones(n)
        b = np.zeros(n)
        b[-1] = 1.0
        pi = spla.spsolve(A.tocsc(), b)
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    return pi


def stationarity_residual(omega: EnvironmentOnGraph, pi) -> float:
    return float(np.abs(omega.sparse_matrix().T @ pi - pi).max())


def reverse_environment(g: FiniteGraph, omega: EnvironmentOnGraph):
    """Time-reversed environment on the reversed graph.

    Edge e = (x, y) of ``g`` becomes edge e = (y, x) of the returned graph,
    with probability pi(x) omega(x, y) / pi(y).
    """
    pi = invariant_measure(g, omega)
    rg = g.reversed()
    probs = pi[g.tails] * omega.probs / pi[g.heads]
    # renormalise rows of the reversed graph (tails of rg are heads of g)
    tot = np.zeros(len(g.vertices))
    np.add.at(tot, g.heads, probs)
    probs = probs / tot[g.heads]
    return rg, EnvironmentOnGraph(rg, probs)


def hitting_probabilities(P, targets, avoid=()) -> np.ndarray:
    """h(z) = P_z(hit ``targets`` before ``avoid``), as the minimal solution.

    ``P`` may be sub-stochastic (mass lost = killed).  Index sets are integer.
    """
    P = sp.csr_matrix(P)
    n = P.shape[0]
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    avoid = np.atleast_1d(np.asarray(avoid, dtype=np.int64))
    h = np.zeros(n)
    h[targets] = 1.0
    free = np.setdiff1d(np.arange(n), np.concatenate([targets, avoid]))
    if free.size == 0:
        return h
    # states that cannot reach a target keep h = 0 (singular otherwise)
    reach = _can_reach(P, targets, avoid)
    free = free[reach[free]]
    if free.size == 0:
        return h
    A = sp.identity(free.size, format="csc") - P[free][:, free].tocsc()
    rhs = np.asarray(P[free][:, targets].sum(axis=1)).ravel()
    h[free] = spla.spsolve(A, rhs) if free.size > 1 else rhs / A.toarray()[0, 0]
    return h


def _can_reach(P, targets, avoid):
    n = P.shape[0]
    PT = P.T.tocsr()
    ok = np.zeros(n, dtype=bool)
    ok[targets] = True
    blocked = np.zeros(n, dtype=bool)
    blocked[avoid] = True
    stack = list(targets)
    while stack:
        v = stack.pop()
        for u in PT.indices[PT.indptr[v]:PT.indptr[v + 1]]:
            if not ok[u] and not blocked[u]:
                ok[u] = True
                stack.append(u)
    return ok


def escape_probability(g: FiniteGraph, omega: EnvironmentOnGraph, x, y) -> float:
    """P_x(H_y < H_x^+): starting at x, reach y before coming back to x."""
    xi, yi = g.index[x], g.index[y]
    P = omega.sparse_matrix()
    h = hitting_probabilities(P, [yi], avoid=[xi])
    h[xi] = 0.0
    return float(P[xi].toarray().ravel() @ h)


def return_probability_beta_bound(g: FiniteGraph, omega: EnvironmentOnGraph, x, y):
    """(P_x(H_y < H_x^+), reversed-environment probability of the step x -> y).

    The second entry is the sum over edges (y, x) of pi(y) omega(y, x) / pi(x);
    the first dominates it.  Under P^(alpha) with null divergence the second
    is the Dirichlet marginal Beta(alpha(y, x), alpha_x - alpha(y, x)),
    alpha_x being the total weight leaving x.
    """
    lhs = escape_probability(g, omega, x, y)
    pi = invariant_measure(g, omega)
    xi, yi = g.index[x], g.index[y]
    back = [e for e in g.out_edges(y) if g.heads[e] == xi]
    rhs = float(sum(pi[yi] * omega.probs[e] for e in back) / pi[xi])
    return lhs, rhs


# kappa of a vertex set


def lattice_box_graph(weights: Weights, radius: int, cemetery: bool = False) -> FiniteGraph:
    """Z^d restricted to the sup-norm ball of ``radius`` with lattice weights.

    Edges leaving the box are dropped, or redirected to the cemetery when
    ``cemetery`` is set.  Cut weights (``kappa_of_set``) need the cemetery:
    without it a set touching the box face loses its exiting edges.
    Vertices are coordinate tuples.
    """
    d = weights.d
    rng = range(-radius, radius + 1)
    verts = list(itertools.product(rng, repeat=d))
    inside = set(verts)
    edges = []
    for v in verts:
        for i, a in enumerate(weights.alphas):
            step = weights.direction(i)
            w = tuple(p + s for p, s in zip(v, step))
            if w in inside:
                edges.append((v, w, a))
            elif cemetery:
                edges.append((v, CEMETERY, a))
    if cemetery:
        verts.append(CEMETERY)
    return FiniteGraph(edges, vertices=verts)


def vertex_boundary(g: FiniteGraph, S) -> set:
    """Vertices of S with a neighbour outside S."""
    S = set(S)
    return {x for x in S if any(y not in S for y in g.neighbours(x))}


def out_weight(g: FiniteGraph, K) -> float:
    """Exactly rounded total weight of the edges leaving K."""
    K = set(K)
    return math.fsum(g.weights[e] for v in K for e in g.out_edges(v) if g.vertices[g.heads[e]] not in K)


def connected_supersets(g: FiniteGraph, seed, max_size, allowed=None, budget=ENUMERATION_BUDGET):
    """Yield every connected vertex set K with seed ⊆ K, |K| <= max_size, K ⊆ seed ∪ allowed.

    Each set is produced once (frontier branching with exclusion).  Raises
    EnumerationBudgetError after ``budget`` sets rather than truncating.
    """
    seed = frozenset(seed)
    if not g.is_connected(seed):
        raise GraphDomainError("seed set must be connected")
    ok = (lambda v: True) if allowed is None else (lambda v, A=set(allowed): v in A)
    count = 0

    def frontier_of(K, excluded):
        out = []
        for v in sorted(K, key=g.index.get):
            for w in g.neighbours(v):
                if w not in K and w not in excluded and ok(w) and w not in out and w != CEMETERY:
                    out.append(w)
        return out

    def rec(K, frontier, excluded):
        nonlocal count
        count += 1
        if count > budget:
            raise EnumerationBudgetError(f"more than {budget} candidate sets; shrink the radius or size")
        yield K
        if len(K) >= max_size:
            return
        excluded = set(excluded)
        for v in frontier:
            K2 = K | {v}
            f2 = [w for w in frontier if w not in excluded and w != v]
            for w in g.neighbours(v):
                if w not in K2 and w not in excluded and ok(w) and w not in f2 and w != CEMETERY:
                    f2.append(w)
            yield from rec(K2, f2, excluded)
            excluded.add(v)

    yield from rec(seed, frontier_of(seed, set()), set())


def kappa_of_set(g: FiniteGraph, root, S, mode: str = "superset", max_size=None,
                 allowed=None, budget=ENUMERATION_BUDGET) -> float:
    """min of the leaving weight over connected K with {root} ⊊ K and K ∩ ∂S ≠ ∅.

    ``mode`` fixes how K relates to S: "superset" (K ⊇ S), "subset" (K ⊆ S)
    or "free" (no relation).  Candidates are restricted to ``allowed``
    vertices and to sizes up to ``max_size`` (default |S|+1, or |S| for
    "subset").  The enumeration is exhaustive within those bounds.
    """
    S = frozenset(S)
    if root not in S:
        raise GraphDomainError("root must belong to S")
    bdry = vertex_boundary(g, S)
    if mode == "superset":
        seed, size = S, len(S) + 1
        pool = allowed
    elif mode == "subset":
        seed, size = {root}, len(S)
        pool = S if allowed is None else S & set(allowed)
    elif mode == "free":
        seed, size = {root}, len(S) + 1
        pool = allowed
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if max_size is not None:
        size = max_size
    best = math.inf
    for K in connected_supersets(g, seed, size, allowed=pool, budget=budget):
        if len(K) < 2 or not (K & bdry):
            continue
        w = out_weight(g, K)
        if w < best:
            best = w
    return best
