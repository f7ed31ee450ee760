# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Every function here has a numpy twin in :mod:`abcglm._pykernels` with the
same signature and the same draw layout; :mod:`abcglm.kernels` picks one at
import time.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, lgamma, sqrt
from libc.stdint cimport uint32_t, uint64_t, int64_t
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef uint32_t PHILOX_M0 = 0xD2511F53u
cdef uint32_t PHILOX_M1 = 0xCD9E8D57u
cdef uint32_t PHILOX_W0 = 0x9E3779B9u
cdef uint32_t PHILOX_W1 = 0xBB67AE85u

# Above this Poisson mean the multiplicative recurrence would start from an
# underflowed exp(-mu); switch to direct log-pmf terms.
cdef double POISSON_DIRECT_MU = 600.0

BACKEND = "cython"


cdef inline void _philox(uint32_t* ctr, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t c0, c1, c2, c3
    cdef int r
    c0 = ctr[0]; c1 = ctr[1]; c2 = ctr[2]; c3 = ctr[3]
    for r in range(10):
        if r > 0:
            k0 = k0 + PHILOX_W0
            k1 = k1 + PHILOX_W1
        p0 = <uint64_t>PHILOX_M0 * c0
        p1 = <uint64_t>PHILOX_M1 * c2
        c0 = <uint32_t>(p1 >> 32) ^ c1 ^ k0
        c1 = <uint32_t>p1
        c2 = <uint32_t>(p0 >> 32) ^ c3 ^ k1
        c3 = <uint32_t>p0
    ctr[0] = c0; ctr[1] = c1; ctr[2] = c2; ctr[3] = c3


cdef inline double _to_unit(uint32_t a, uint32_t b) noexcept nogil:
    # 53 random bits, strictly inside (0, 1)
    return ((a >> 5) * 67108864.0 + (b >> 6) + 0.5) * (1.0 / 9007199254740992.0)


cdef inline double _uniform(uint32_t k0, uint32_t k1, uint64_t stream,
                            uint32_t purpose, uint32_t draw) noexcept nogil:
    cdef uint32_t ctr[4]
    ctr[0] = draw >> 1
    ctr[1] = purpose
    ctr[2] = <uint32_t>stream
    ctr[3] = <uint32_t>(stream >> 32)
    _philox(ctr, k0, k1)
    if draw & 1:
        return _to_unit(ctr[2], ctr[3])
    return _to_unit(ctr[0], ctr[1])


cdef inline int64_t _poisson_inv(double mu, double u) noexcept nogil:
    cdef int64_t k = 0
    cdef double p, c, limit
    if mu <= 0.0:
        return 0
    limit = mu + 60.0 * sqrt(mu) + 60.0
    if mu < POISSON_DIRECT_MU:
        p = exp(-mu)
        c = p
        while u > c and k < limit:
            k += 1
            p = p * mu / k
            c = c + p
        return k
    c = exp(-mu)
    while u > c and k < limit:
        k += 1
        c = c + exp(-mu + k * log(mu) - lgamma(k + 1.0))
    return k


def philox4x32(counter, key):
    """One Philox4x32-10 block; `counter` is 4 words, `key` 2 words."""
    cdef uint32_t ctr[4]
    cdef int i
    for i in range(4):
        ctr[i] = <uint32_t>counter[i]
    _philox(ctr, <uint32_t>key[0], <uint32_t>key[1])
    return (int(ctr[0]), int(ctr[1]), int(ctr[2]), int(ctr[3]))


def uniforms(key, cnp.ndarray streams, unsigned int purpose, int n_draws):
    cdef const uint64_t[::1] s = np.ascontiguousarray(streams, dtype=np.uint64)
    cdef Py_ssize_t n = s.shape[0], i
    cdef int d
    cdef uint32_t k0 = <uint32_t>key[0], k1 = <uint32_t>key[1]
    out = np.empty((n, n_draws), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for d in range(n_draws):
                o[i, d] = _uniform(k0, k1, s[i], purpose, d)
    return out


def coalescent_segsites(cnp.ndarray thetas, int n_seq, key,
                        cnp.ndarray streams, unsigned int purpose):
    """Segregating sites under the standard coalescent.

    Draw layout per stream: draws 0..n_seq-2 are the inter-coalescence
    times for k = n_seq..2 lineages, draw n_seq-1 feeds Poisson inversion.
    """
    cdef const double[::1] th = np.ascontiguousarray(thetas, dtype=np.float64)
    cdef const uint64_t[::1] s = np.ascontiguousarray(streams, dtype=np.uint64)
    cdef Py_ssize_t n = th.shape[0], i
    cdef uint32_t k0 = <uint32_t>key[0], k1 = <uint32_t>key[1]
    cdef int d, k
    cdef double total, u
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] o = out
    with nogil:
        for i in range(n):
            total = 0.0
            for d in range(n_seq - 1):
                k = n_seq - d
                u = _uniform(k0, k1, s[i], purpose, d)
                # k * T_k with T_k ~ Exp(k(k-1)/2)
                total = total + k * (-log(u) / (k * (k - 1) * 0.5))
            u = _uniform(k0, k1, s[i], purpose, n_seq - 1)
            o[i] = _poisson_inv(th[i] * total * 0.5, u)
    return out


def poisson_counts(cnp.ndarray means, key, cnp.ndarray streams,
                   unsigned int purpose, int draw):
    cdef const double[::1] mu = np.ascontiguousarray(means, dtype=np.float64)
    cdef const uint64_t[::1] s = np.ascontiguousarray(streams, dtype=np.uint64)
    cdef Py_ssize_t n = mu.shape[0], i
    cdef uint32_t k0 = <uint32_t>key[0], k1 = <uint32_t>key[1]
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _poisson_inv(mu[i], _uniform(k0, k1, s[i], purpose, draw))
    return out


def mixture_logsumexp(cnp.ndarray points, cnp.ndarray centers,
                      cnp.ndarray log_weights):
    """out[g] = log sum_j exp(log_weights[j] - |points[g] - centers[j]|^2 / 2).

    Inputs are already whitened, so every component has identity covariance.
    """
    cdef const double[:, ::1] x = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(centers, dtype=np.float64)
    cdef const double[::1] lw = np.ascontiguousarray(log_weights, dtype=np.float64)
    cdef Py_ssize_t g, j, n_pts = x.shape[0], n_comp = c.shape[0]
    cdef Py_ssize_t dim = x.shape[1], a
    cdef double diff, sq, best, acc
    if c.shape[1] != dim or lw.shape[0] != n_comp:
        raise ValueError("shape mismatch between points, centers and weights")
    out = np.empty(n_pts, dtype=np.float64)
    cdef double[::1] o = out
    if n_comp == 0:
        out.fill(-np.inf)
        return out
    cdef double* buf = <double*>malloc(n_comp * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for g in range(n_pts):
                best = -1.0 / 0.0
                for j in range(n_comp):
                    sq = 0.0
                    for a in range(dim):
                        diff = x[g, a] - c[j, a]
                        sq = sq + diff * diff
                    buf[j] = lw[j] - 0.5 * sq
                    if buf[j] > best:
                        best = buf[j]
                if best == -1.0 / 0.0:
                    o[g] = best
                    continue
                acc = 0.0
                for j in range(n_comp):
                    acc = acc + exp(buf[j] - best)
                o[g] = best + log(acc)
    finally:
        free(buf)
    return out


def windowed_logsumexp_1d(cnp.ndarray points, cnp.ndarray centers,
                          cnp.ndarray log_weights, double cutoff):
    """One-dimensional ``mixture_logsumexp`` that skips far components.

    ``points`` and ``centers`` must be ascending. Components further than
    ``cutoff`` from a point are left out of that point's sum.
    """
    cdef const double[::1] x = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[::1] c = np.ascontiguousarray(centers, dtype=np.float64)
    cdef const double[::1] lw = np.ascontiguousarray(log_weights, dtype=np.float64)
    cdef Py_ssize_t g, j, lo = 0, hi = 0, n_pts = x.shape[0], n_comp = c.shape[0]
    cdef double diff, v, best, acc
    if lw.shape[0] != n_comp:
        raise ValueError("shape mismatch between centers and weights")
    out = np.empty(n_pts, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for g in range(n_pts):
            while lo < n_comp and c[lo] < x[g] - cutoff:
                lo += 1
            if hi < lo:
                hi = lo
            while hi < n_comp and c[hi] <= x[g] + cutoff:
                hi += 1
            best = -1.0 / 0.0
            for j in range(lo, hi):
                diff = x[g] - c[j]
                v = lw[j] - 0.5 * diff * diff
                if v > best:
                    best = v
            if best == -1.0 / 0.0:
                o[g] = best
                continue
            acc = 0.0
            for j in range(lo, hi):
                diff = x[g] - c[j]
                acc = acc + exp(lw[j] - 0.5 * diff * diff - best)
            o[g] = best + log(acc)
    return out
