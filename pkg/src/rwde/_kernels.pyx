# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; bit-identical mirror of ``rwde._kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, sqrt, cos
from libc.stdlib cimport malloc, realloc, free, calloc
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    static inline void rw_philox(uint64_t *c, uint64_t k0, uint64_t k1) {
        int r;
        for (r = 0; r < 10; r++) {
            if (r) { k0 += 0x9E3779B97F4A7C15ULL; k1 += 0xBB67AE8584CAA73BULL; }
            unsigned __int128 p0 = (unsigned __int128)0xD2E7470EE14C6C93ULL * c[0];
            unsigned __int128 p1 = (unsigned __int128)0xCA5A826395121157ULL * c[2];
            uint64_t n0 = ((uint64_t)(p1 >> 64)) ^ c[1] ^ k0;
            uint64_t n1 = (uint64_t)p1;
            uint64_t n2 = ((uint64_t)(p0 >> 64)) ^ c[3] ^ k1;
            uint64_t n3 = (uint64_t)p0;
            c[0] = n0; c[1] = n1; c[2] = n2; c[3] = n3;
        }
    }
    static inline uint64_t rw_splitmix(uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }
    """
    void rw_philox(uint64_t* c, uint64_t k0, uint64_t k1) nogil
    uint64_t rw_splitmix(uint64_t x) nogil

NAME = "cython"

cdef uint64_t TAG_ENV_A = 0x656E762D6B65792D
cdef uint64_t TAG_ENV_B = 0x2D656E762D6B6579
cdef uint64_t TAG_WALK_A = 0x77616C6B2D6B6579
cdef uint64_t TAG_WALK_B = 0x2D77616C6B2D6B65
cdef uint64_t TAG_VTX_A = 0x7665727465782D61
cdef uint64_t TAG_VTX_B = 0x7665727465782D62
cdef double TWO_PI = 6.283185307179586
cdef double TINY = 1e-300


cdef inline double to_unit(uint64_t w) nogil:
    return (<double>(w >> 11) + 0.5) * 1.1102230246251565e-16


cdef struct Stream:
    uint64_t k0
    uint64_t k1
    uint64_t h0
    uint64_t h1
    uint64_t block
    uint64_t buf[4]
    int pos


cdef inline double st_uniform(Stream* s) nogil:
    cdef double u
    if s.pos == 4:
        s.buf[0] = s.block
        s.buf[1] = 0
        s.buf[2] = s.h0
        s.buf[3] = s.h1
        rw_philox(s.buf, s.k0, s.k1)
        s.block += 1
        s.pos = 0
    u = to_unit(s.buf[s.pos])
    s.pos += 1
    return u


cdef inline double st_normal(Stream* s) nogil:
    cdef double u1 = st_uniform(s)
    cdef double u2 = st_uniform(s)
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


cdef double st_log_gamma(Stream* s, double shape) nogil:
    cdef double boost, dd, c, x, v, u
    if shape < 1.0:
        boost = st_log_gamma(s, shape + 1.0)
        return boost + log(st_uniform(s)) / shape
    dd = shape - 1.0 / 3.0
    c = 1.0 / sqrt(9.0 * dd)
    while True:
        x = st_normal(s)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = st_uniform(s)
        if u < 1.0 - 0.0331 * x * x * x * x:
            return log(dd * v)
        if log(u) < 0.5 * x * x + dd * (1.0 - v + log(v)):
            return log(dd * v)


cdef inline void vertex_lanes(int64_t* coords, int d, uint64_t* h0, uint64_t* h1) nogil:
    cdef uint64_t a = TAG_VTX_A
    cdef uint64_t b = TAG_VTX_B
    cdef uint64_t w
    cdef int i
    for i in range(d):
        w = <uint64_t>coords[i]
        a = rw_splitmix(a ^ w)
        b = rw_splitmix(b + w)
    h0[0] = a
    h1[0] = b


cdef void env_vector_c(uint64_t k0, uint64_t k1, int64_t* coords, int d,
                       double* alphas, int k, double* out) nogil:
    cdef Stream s
    cdef int i, m
    cdef double top, tot, rest, best
    vertex_lanes(coords, d, &s.h0, &s.h1)
    s.k0 = k0
    s.k1 = k1
    s.block = 0
    s.pos = 4
    for i in range(k):
        out[i] = st_log_gamma(&s, alphas[i])
    top = out[0]
    for i in range(1, k):
        if out[i] > top:
            top = out[i]
    tot = 0.0
    for i in range(k):
        out[i] = exp(out[i] - top)
        tot += out[i]
    m = 0
    best = -1.0
    for i in range(k):
        out[i] = out[i] / tot
        if out[i] < TINY:
            out[i] = TINY
        if out[i] > best:
            best = out[i]
            m = i
    rest = 0.0
    for i in range(k):
        if i != m:
            rest += out[i]
    out[m] = 1.0 - rest


cdef void keys_for(uint64_t seed, uint64_t ta, uint64_t tb, uint64_t* k0, uint64_t* k1):
    k0[0] = rw_splitmix(seed ^ ta)
    k1[0] = rw_splitmix(seed ^ tb)


def env_vector(env_seed, coords, alphas):
    cdef uint64_t k0, k1
    keys_for(<uint64_t>(env_seed & 0xFFFFFFFFFFFFFFFF), TAG_ENV_A, TAG_ENV_B, &k0, &k1)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] c = np.ascontiguousarray(coords, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] al = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(al.shape[0])
    env_vector_c(k0, k1, <int64_t*>c.data, c.shape[0], <double*>al.data, al.shape[0],
                 <double*>out.data)
    return out.tolist()


def env_batch(env_seed, coords, alphas):
    cdef uint64_t k0, k1
    keys_for(<uint64_t>(env_seed & 0xFFFFFFFFFFFFFFFF), TAG_ENV_A, TAG_ENV_B, &k0, &k1)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] c = np.ascontiguousarray(coords, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] al = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0], i
    cdef int d = c.shape[1], k = al.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, k))
    cdef int64_t* cp = <int64_t*>c.data
    cdef double* alp = <double*>al.data
    cdef double* op = <double*>out.data
    with nogil:
        for i in range(n):
            env_vector_c(k0, k1, cp + i * d, d, alp, k, op + i * k)
    return out


def walk_uniforms(walk_seed, start, count):
    cdef uint64_t k0, k1
    keys_for(<uint64_t>(walk_seed & 0xFFFFFFFFFFFFFFFF), TAG_WALK_A, TAG_WALK_B, &k0, &k1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(count)
    cdef uint64_t buf[4]
    cdef int64_t n, j, block = -1
    for j in range(count):
        n = start + j
        if n // 4 != block:
            block = n // 4
            buf[0] = <uint64_t>block
            buf[1] = 0
            buf[2] = 0
            buf[3] = 0
            rw_philox(buf, k0, k1)
        out[j] = to_unit(buf[n % 4])
    return out


cdef int find_renewals_c(double* lv, int64_t last, double* smin, double a, int64_t window,
                         int64_t max_count, int64_t* times, int64_t* n_found,
                         int64_t* pending) nogil:
    cdef int64_t b = 0, n, tau
    cdef double runmax, target, ref, x
    n_found[0] = 0
    pending[0] = -1
    while n_found[0] < max_count:
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
                return 1
            ref = lv[tau]
            if tau == last or smin[tau + 1] >= ref:
                if last - tau >= window:
                    times[n_found[0]] = tau
                    n_found[0] += 1
                    b = tau
                    break
                pending[0] = tau
                return 2
            n = tau + 1
            while lv[n] >= ref:
                if lv[n] > runmax:
                    runmax = lv[n]
                n += 1
            n += 1
    return 0


cdef void fill_smin(double* lv, int64_t last, double* smin) nogil:
    cdef int64_t i
    smin[last] = lv[last]
    i = last - 1
    while i >= 0:
        smin[i] = lv[i] if lv[i] < smin[i + 1] else smin[i + 1]
        i -= 1


def find_renewals(levels, a, window, max_count):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lv = np.ascontiguousarray(levels, dtype=np.float64)
    cdef int64_t last = lv.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] smin = np.empty(last + 1)
    cdef int64_t cap = max(1, min(<int64_t>max_count, last + 1))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] times = np.empty(cap, dtype=np.int64)
    cdef int64_t found, pending
    cdef int state
    fill_smin(<double*>lv.data, last, <double*>smin.data)
    state = find_renewals_c(<double*>lv.data, last, <double*>smin.data, a, window,
                            min(<int64_t>max_count, cap), <int64_t*>times.data, &found, &pending)
    if state == 0 and found < max_count:
        state = 1
    return times[:found].tolist(), pending, state


cdef struct Table:
    int64_t cap
    int64_t size
    int d
    int k
    int64_t* keys
    double* vals
    char* used


cdef int table_init(Table* t, int d, int k, int64_t cap) nogil:
    t.cap = cap
    t.size = 0
    t.d = d
    t.k = k
    t.keys = <int64_t*>malloc(cap * d * sizeof(int64_t))
    t.vals = <double*>malloc(cap * k * sizeof(double))
    t.used = <char*>calloc(cap, 1)
    return 0


cdef void table_free(Table* t) nogil:
    free(t.keys)
    free(t.vals)
    free(t.used)


cdef inline bint same(int64_t* a, int64_t* b, int d) nogil:
    cdef int i
    for i in range(d):
        if a[i] != b[i]:
            return False
    return True


cdef int64_t table_slot(Table* t, int64_t* coords, uint64_t h) nogil:
    cdef int64_t i = <int64_t>(h & <uint64_t>(t.cap - 1))
    while t.used[i]:
        if same(t.keys + i * t.d, coords, t.d):
            return i
        i = (i + 1) & (t.cap - 1)
    return i


cdef void table_grow(Table* t) nogil:
    cdef Table nt
    cdef int64_t i, j, m
    cdef uint64_t h0, h1
    table_init(&nt, t.d, t.k, t.cap * 2)
    for i in range(t.cap):
        if t.used[i]:
            vertex_lanes(t.keys + i * t.d, t.d, &h0, &h1)
            j = table_slot(&nt, t.keys + i * t.d, h0)
            nt.used[j] = 1
            for m in range(t.d):
                nt.keys[j * t.d + m] = t.keys[i * t.d + m]
            for m in range(t.k):
                nt.vals[j * t.k + m] = t.vals[i * t.k + m]
    nt.size = t.size
    table_free(t)
    t[0] = nt


def walk(env_seed, walk_seed, alphas, start, n_max, u_hat, a, window, n_renewals,
         schedule0=256):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] al = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uu = np.ascontiguousarray(u_hat, dtype=np.float64)
    cdef int k = al.shape[0]
    cdef int d = k // 2
    cdef uint64_t ek0, ek1, wk0, wk1, h0, h1
    keys_for(<uint64_t>(env_seed & 0xFFFFFFFFFFFFFFFF), TAG_ENV_A, TAG_ENV_B, &ek0, &ek1)
    keys_for(<uint64_t>(walk_seed & 0xFFFFFFFFFFFFFFFF), TAG_WALK_A, TAG_WALK_B, &wk0, &wk1)
    cdef int64_t nmax = n_max
    cdef int64_t win = window
    cdef int64_t nren = n_renewals
    cdef double aa = a
    cdef int64_t horizon = nmax if nren <= 0 else min(nmax, <int64_t>schedule0 + win)
    cdef int64_t cap = 1024
    cdef int64_t* trace = <int64_t*>malloc(cap * d * sizeof(int64_t))
    cdef double* levels = <double*>malloc(cap * sizeof(double))
    cdef double* smin = NULL
    cdef int64_t* times = NULL
    cdef int64_t pos[64]
    cdef uint64_t buf[4]
    cdef Table table
    cdef int64_t n = 0, slot, found = 0, pending = -1
    cdef int i, state = 1
    cdef double u, cum, lvl
    cdef double* p
    cdef double* alp = <double*>al.data
    cdef double* up = <double*>uu.data
    if d > 64:
        raise ValueError("compiled kernel supports d <= 64")
    for i in range(d):
        pos[i] = start[i]
    table_init(&table, d, k, 1024)
    lvl = 0.0
    for i in range(d):
        lvl += pos[i] * uu[i]
        trace[i] = pos[i]
    levels[0] = lvl
    with nogil:
        while True:
            while n < horizon:
                vertex_lanes(pos, d, &h0, &h1)
                slot = table_slot(&table, pos, h0)
                if not table.used[slot]:
                    if 2 * (table.size + 1) > table.cap:
                        table_grow(&table)
                        slot = table_slot(&table, pos, h0)
                    table.used[slot] = 1
                    table.size += 1
                    for i in range(d):
                        table.keys[slot * d + i] = pos[i]
                    env_vector_c(ek0, ek1, pos, d, alp, k, table.vals + slot * k)
                p = table.vals + slot * k
                if n % 4 == 0:
                    buf[0] = <uint64_t>(n // 4)
                    buf[1] = 0
                    buf[2] = 0
                    buf[3] = 0
                    rw_philox(buf, wk0, wk1)
                u = to_unit(buf[n % 4])
                cum = 0.0
                i = k - 1
                for slot in range(k - 1):
                    cum += p[slot]
                    if u < cum:
                        i = slot
                        break
                if i < d:
                    pos[i] += 1
                else:
                    pos[i - d] -= 1
                n += 1
                if n >= cap:
                    cap *= 2
                    trace = <int64_t*>realloc(trace, cap * d * sizeof(int64_t))
                    levels = <double*>realloc(levels, cap * sizeof(double))
                lvl = 0.0
                for i in range(d):
                    lvl += pos[i] * up[i]
                    trace[n * d + i] = pos[i]
                levels[n] = lvl
            if nren <= 0:
                state = 1
                break
            smin = <double*>realloc(smin, (n + 1) * sizeof(double))
            times = <int64_t*>realloc(times, (nren + 1) * sizeof(int64_t))
            fill_smin(levels, n, smin)
            state = find_renewals_c(levels, n, smin, aa, win, nren, times, &found, &pending)
            if state == 0 or horizon >= nmax:
                break
            horizon = min(nmax, horizon + max(win, horizon // 4))
    table_free(&table)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.empty((n + 1, d), dtype=np.int64)
    cdef int64_t j
    for j in range((n + 1) * d):
        (<int64_t*>out.data)[j] = trace[j]
    result_times = [times[j] for j in range(found)] if times != NULL else []
    free(trace)
    free(levels)
    free(smin)
    free(times)
    if nren <= 0:
        return out, [], -1, 1
    return out, result_times, pending, state
