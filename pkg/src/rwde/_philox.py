"""Counter-based random streams (pure Python reference).

Philox4x64-10 keyed by 64-bit seeds, plus the scalar Gamma/Dirichlet
routines that the compiled kernels reproduce bit for bit.  Every stream
here is a pure function of (key, counter), so lazily generated
environments do not depend on the order in which vertices are queried.
"""

import math

MASK64 = (1 << 64) - 1

_M0 = 0xD2E7470EE14C6C93
_M1 = 0xCA5A826395121157
_W0 = 0x9E3779B97F4A7C15
_W1 = 0xBB67AE8584CAA73B

# domain-separation tags
TAG_ENV_A = 0x656E762D6B65792D
TAG_ENV_B = 0x2D656E762D6B6579
TAG_WALK_A = 0x77616C6B2D6B6579
TAG_WALK_B = 0x2D77616C6B2D6B65
TAG_VTX_A = 0x7665727465782D61
TAG_VTX_B = 0x7665727465782D62
TAG_REPLICA_ENV = 0x7265706C2D656E76
TAG_REPLICA_WALK = 0x7265706C2D776C6B

TWO_PI = 6.283185307179586
TINY = 1e-300


def philox4x64(c0, c1, c2, c3, k0, k1):
    """One Philox4x64-10 block; returns four 64-bit words."""
    for r in range(10):
        if r:
            k0 = (k0 + _W0) & MASK64
            k1 = (k1 + _W1) & MASK64
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = ((p1 >> 64) ^ c1 ^ k0, p1 & MASK64,
                          (p0 >> 64) ^ c3 ^ k1, p0 & MASK64)
    return c0, c1, c2, c3


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix(*words):
    """Fold integers (any sign) into one 64-bit word."""
    h = 0x243F6A8885A308D3
    for w in words:
        h = splitmix64(h ^ (w & MASK64))
    return h


def replica_seeds(master_seed, replica):
    """(environment seed, walk seed) for one replica of an experiment."""
    return (mix(master_seed, replica, TAG_REPLICA_ENV),
            mix(master_seed, replica, TAG_REPLICA_WALK))


def env_key(env_seed):
    return splitmix64(env_seed ^ TAG_ENV_A), splitmix64(env_seed ^ TAG_ENV_B)


def walk_key(walk_seed):
    return splitmix64(walk_seed ^ TAG_WALK_A), splitmix64(walk_seed ^ TAG_WALK_B)


def vertex_lanes(coords):
    """128-bit hash of lattice coordinates, as two 64-bit lanes."""
    h0 = TAG_VTX_A
    h1 = TAG_VTX_B
    for c in coords:
        w = c & MASK64
        h0 = splitmix64(h0 ^ w)
        h1 = splitmix64((h1 + w) & MASK64)
    return h0, h1


def to_unit(word):
    """Map a 64-bit word to the open interval (0, 1)."""
    return ((word >> 11) + 0.5) * 1.1102230246251565e-16


class CounterStream:
    """Sequential uniforms from Philox blocks (draw, 0, lane0, lane1)."""

    __slots__ = ("k0", "k1", "h0", "h1", "block", "buf", "pos")

    def __init__(self, key, lanes=(0, 0)):
        self.k0, self.k1 = key
        self.h0, self.h1 = lanes
        self.block = 0
        self.buf = ()
        self.pos = 4

    def uniform(self):
        if self.pos == 4:
            self.buf = philox4x64(self.block, 0, self.h0, self.h1, self.k0, self.k1)
            self.block += 1
            self.pos = 0
        w = self.buf[self.pos]
        self.pos += 1
        return to_unit(w)

    def normal(self):
        u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(TWO_PI * u2)

    def log_gamma_variate(self, shape):
        """log of a Gamma(shape, 1) draw, Marsaglia-Tsang with shape<1 boost."""
        if shape < 1.0:
            boost = self.log_gamma_variate(shape + 1.0)
            return boost + math.log(self.uniform()) / shape
        dd = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * dd)
        while True:
            x = self.normal()
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u = self.uniform()
            if u < 1.0 - 0.0331 * x * x * x * x:
                return math.log(dd * v)
            if math.log(u) < 0.5 * x * x + dd * (1.0 - v + math.log(v)):
                return math.log(dd * v)


def simplex_from_logs(logs):
    """Normalise log-weights onto the simplex.

    Entries are clamped at TINY so none is zero, and the largest entry is
    recomputed as 1 minus the others so that ``simplex_sum`` is exactly 1.
    """
    top = max(logs)
    w = [math.exp(v - top) for v in logs]
    s = 0.0
    for x in w:
        s += x
    p = [max(x / s, TINY) for x in w]
    m = p.index(max(p))
    rest = 0.0
    for i, x in enumerate(p):
        if i != m:
            rest += x
    p[m] = 1.0 - rest
    return p


def simplex_sum(p):
    """Left-to-right sum with the largest entry added last."""
    m = max(range(len(p)), key=lambda i: (p[i], -i))
    s = 0.0
    for i, x in enumerate(p):
        if i != m:
            s += x
    return s + p[m]


def dirichlet_scalar(stream, alphas):
    return simplex_from_logs([stream.log_gamma_variate(a) for a in alphas])
