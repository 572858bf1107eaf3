"""Lazy Dirichlet environments on Z^d and the confinement boxes."""

from __future__ import annotations

import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from rwde._backend import kernels
from rwde._philox import mix, replica_seeds
from rwde.dirichlet import ParameterDomainError, Weights


class LatticeEnvironment:
    """omega_x ~ D(alpha) at every x in Z^d, generated on demand.

    The vector at ``x`` is a pure function of ``(seed, x, weights)``: it
    is drawn from a counter-based stream keyed by the seed and a 128-bit
    hash of the coordinates.  The LRU cache only saves recomputation.
    """

    def __init__(self, weights: Weights, seed: int, cache_size: int = 1 << 16):
        if not isinstance(weights, Weights):
            weights = Weights(tuple(weights))
        self.weights = weights
        self.seed = int(seed) & ((1 << 64) - 1)
        self.cache_size = cache_size
        self._cache: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    @classmethod
    def for_replica(cls, weights, master_seed: int, replica: int, **kw):
        return cls(weights, replica_seeds(master_seed, replica)[0], **kw)

    @property
    def d(self) -> int:
        return self.weights.d

    def env_at(self, v) -> np.ndarray:
        key = tuple(int(c) for c in v)
        if len(key) != self.d:
            raise ValueError(f"vertex {key} is not in Z^{self.d}")
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        p = np.asarray(kernels.env_vector(self.seed, key, self.weights.alphas), dtype=float)
        p.setflags(write=False)
        if self.cache_size:
            with self._lock:
                self._cache[key] = p
                if len(self._cache) > self.cache_size:
                    self._cache.popitem(last=False)
        return p

    def env_batch(self, coords) -> np.ndarray:
        """Vectors at many vertices, shape (n, 2d); bypasses the cache."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.d)
        return kernels.env_batch(self.seed, coords, self.weights.alphas)

    def prob(self, x, y) -> float:
        """omega(x, y) for lattice neighbours x, y."""
        return float(self.env_at(x)[step_index(x, y)])

    def snapshot(self) -> str:
        """Seed and weights; the field itself is regenerated, never stored."""
        return json.dumps({"seed": self.seed, "alphas": list(self.weights.alphas)})

    @classmethod
    def from_snapshot(cls, text: str) -> LatticeEnvironment:
        rec = json.loads(text)
        return cls(Weights(tuple(rec["alphas"])), rec["seed"])


class HomogeneousEnvironment:
    """The same transition vector at every vertex (test fixtures, controls)."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)
        if self.probs.ndim != 1 or self.probs.size % 2:
            raise ValueError("need a vector of length 2d")
        self.d = self.probs.size // 2

    def env_at(self, v):
        return self.probs


def step_index(x, y) -> int:
    """Index i with y - x equal to the i-th unit step (+e_1..+e_d, -e_1..-e_d)."""
    diff = [b - a for a, b in zip(x, y)]
    nz = [i for i, c in enumerate(diff) if c]
    if len(nz) != 1 or abs(diff[nz[0]]) != 1:
        raise ValueError(f"{tuple(x)} and {tuple(y)} are not neighbours")
    j = nz[0]
    return j if diff[j] == 1 else j + len(diff)


def unit_steps(d: int) -> np.ndarray:
    """(2d, d) array of the unit steps in kernel order."""
    e = np.eye(d, dtype=np.int64)
    return np.vstack([e, -e])


@dataclass(frozen=True)
class Box:
    """U = [0, ell] x [-ell, ell]^(d-1), optionally shifted to ``origin``."""

    ell: int
    d: int
    origin: tuple = ()

    def __post_init__(self):
        if self.ell < 1 or self.d < 1:
            raise ParameterDomainError("box needs ell >= 1 and d >= 1")
        if not self.origin:
            object.__setattr__(self, "origin", (0,) * self.d)

    def __contains__(self, v) -> bool:
        rel = [c - o for c, o in zip(v, self.origin)]
        if not 0 <= rel[0] <= self.ell:
            return False
        return all(-self.ell <= c <= self.ell for c in rel[1:])

    def vertices(self) -> np.ndarray:
        ranges = [np.arange(0, self.ell + 1)] + [np.arange(-self.ell, self.ell + 1)] * (self.d - 1)
        grid = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, self.d)
        return grid + np.asarray(self.origin, dtype=np.int64)


def box_length(x: float, kappa: float, c_T: float) -> int:
    """ceil((1 + kappa) / c_T * log x)."""
    if not x > 1:
        raise ParameterDomainError(f"box length needs x > 1, got {x}")
    if not c_T > 0:
        raise ParameterDomainError(f"c_T must be positive, got {c_T}")
    return max(1, math.ceil((1.0 + kappa) / c_T * math.log(x)))


def derived_seed(master_seed: int, *labels: int) -> int:
    """Independent 64-bit seed for a sub-task of an experiment."""
    return mix(master_seed, *labels)
