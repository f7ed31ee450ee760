"""Pure numpy versions of the compiled kernels.

Same signatures, same draw layout and the same floating-point operation
order as ``_ckernels.pyx``, so both backends produce the same streams.
"""

import numpy as np
from scipy.special import gammaln

BACKEND = "numpy"

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

_POISSON_DIRECT_MU = 600.0
_CHUNK = 1 << 16


def _philox_words(c0, c1, c2, c3, k0, k1):
    # all arrays uint64 holding 32-bit values
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK32,
        )
    return c0, c1, c2, c3


def _to_unit(a, b):
    hi = (a >> np.uint64(5)).astype(np.float64)
    lo = (b >> np.uint64(6)).astype(np.float64)
    return (hi * 67108864.0 + lo + 0.5) * (1.0 / 9007199254740992.0)


def philox4x32(counter, key):
    """One Philox4x32-10 block; `counter` is 4 words, `key` 2 words."""
    words = [np.uint64(int(w) & 0xFFFFFFFF) for w in counter]
    out = _philox_words(*words, int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF)
    return tuple(int(w) for w in out)


def _uniform_column(k0, k1, streams, purpose, draw):
    n = streams.shape[0]
    c0 = np.full(n, draw >> 1, dtype=np.uint64)
    c1 = np.full(n, purpose, dtype=np.uint64)
    c2 = streams & _MASK32
    c3 = streams >> _SHIFT32
    w0, w1, w2, w3 = _philox_words(c0, c1, c2, c3, k0, k1)
    if draw & 1:
        return _to_unit(w2, w3)
    return _to_unit(w0, w1)


def uniforms(key, streams, purpose, n_draws):
    streams = np.ascontiguousarray(streams, dtype=np.uint64)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    out = np.empty((streams.shape[0], n_draws), dtype=np.float64)
    for d in range(n_draws):
        out[:, d] = _uniform_column(k0, k1, streams, int(purpose), d)
    return out


def _poisson_inv(mu, u):
    mu = np.asarray(mu, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    k = np.zeros(mu.shape, dtype=np.int64)
    positive = mu > 0.0
    limit = mu + 60.0 * np.sqrt(np.where(positive, mu, 0.0)) + 60.0
    small = positive & (mu < _POISSON_DIRECT_MU)
    if small.any():
        m = mu[small]
        uu = u[small]
        lim = limit[small]
        p = np.exp(-m)
        c = p.copy()
        kk = np.zeros(m.shape, dtype=np.int64)
        active = (uu > c) & (kk < lim)
        while active.any():
            kk[active] += 1
            p[active] = p[active] * m[active] / kk[active]
            c[active] = c[active] + p[active]
            active = (uu > c) & (kk < lim)
        k[small] = kk
    large = positive & ~small
    if large.any():
        for idx in np.flatnonzero(large):
            m, uu, lim = float(mu[idx]), float(u[idx]), float(limit[idx])
            c = np.exp(-m)
            kk = 0
            while uu > c and kk < lim:
                kk += 1
                c = c + np.exp(-m + kk * np.log(m) - gammaln(kk + 1.0))
            k[idx] = kk
    return k


def coalescent_segsites(thetas, n_seq, key, streams, purpose):
    """Segregating sites under the standard coalescent (numpy path)."""
    thetas = np.ascontiguousarray(thetas, dtype=np.float64)
    streams = np.ascontiguousarray(streams, dtype=np.uint64)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    out = np.empty(thetas.shape[0], dtype=np.int64)
    for lo in range(0, thetas.shape[0], _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        s = streams[sl]
        total = np.zeros(s.shape[0], dtype=np.float64)
        for d in range(n_seq - 1):
            k = n_seq - d
            u = _uniform_column(k0, k1, s, int(purpose), d)
            total = total + k * (-np.log(u) / (k * (k - 1) * 0.5))
        u = _uniform_column(k0, k1, s, int(purpose), n_seq - 1)
        out[sl] = _poisson_inv(thetas[sl] * total * 0.5, u)
    return out


def poisson_counts(means, key, streams, purpose, draw):
    means = np.ascontiguousarray(means, dtype=np.float64)
    streams = np.ascontiguousarray(streams, dtype=np.uint64)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    u = _uniform_column(k0, k1, streams, int(purpose), int(draw))
    return _poisson_inv(means, u)


def mixture_logsumexp(points, centers, log_weights):
    """out[g] = log sum_j exp(log_weights[j] - |points[g] - centers[j]|^2 / 2)."""
    x = np.ascontiguousarray(points, dtype=np.float64)
    c = np.ascontiguousarray(centers, dtype=np.float64)
    lw = np.ascontiguousarray(log_weights, dtype=np.float64)
    if c.shape[1] != x.shape[1] or lw.shape[0] != c.shape[0]:
        raise ValueError("shape mismatch between points, centers and weights")
    out = np.empty(x.shape[0], dtype=np.float64)
    if c.shape[0] == 0:
        out.fill(-np.inf)
        return out
    # bound the (rows x components) temporary to ~8M doubles
    rows = max(1, (1 << 23) // c.shape[0])
    for lo in range(0, x.shape[0], rows):
        xs = x[lo:lo + rows]
        sq = np.zeros((xs.shape[0], c.shape[0]))
        for a in range(x.shape[1]):
            diff = xs[:, a, None] - c[None, :, a]
            sq += diff * diff
        vals = lw[None, :] - 0.5 * sq
        best = vals.max(axis=1)
        finite = np.isfinite(best)
        acc = np.exp(vals[finite] - best[finite, None]).sum(axis=1)
        res = np.full(xs.shape[0], -np.inf)
        res[finite] = best[finite] + np.log(acc)
        out[lo:lo + rows] = res
    return out


def windowed_logsumexp_1d(points, centers, log_weights, cutoff):
    """One-dimensional ``mixture_logsumexp`` that skips far components.

    ``points`` and ``centers`` must be ascending. Components further than
    ``cutoff`` from a point are left out of that point's sum.
    """
    x = np.ascontiguousarray(points, dtype=np.float64)
    c = np.ascontiguousarray(centers, dtype=np.float64)
    lw = np.ascontiguousarray(log_weights, dtype=np.float64)
    if lw.shape[0] != c.shape[0]:
        raise ValueError("shape mismatch between centers and weights")
    lo = np.searchsorted(c, x - cutoff, side="left")
    hi = np.searchsorted(c, x + cutoff, side="right")
    out = np.full(x.shape[0], -np.inf)
    for g in range(x.shape[0]):
        if hi[g] <= lo[g]:
            continue
        diff = x[g] - c[lo[g]:hi[g]]
        vals = lw[lo[g]:hi[g]] - 0.5 * diff * diff
        best = vals.max()
        if np.isfinite(best):
            out[g] = best + np.log(np.exp(vals - best).sum())
    return out
