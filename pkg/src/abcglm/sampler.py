"""ABC rejection sampling.

Proposals are indexed 0, 1, 2, ... and each index owns its random stream,
so the proposal sequence is fixed by the key alone. Work is split into
chunks that may run on several threads; results are merged in index order,
which keeps every output independent of the worker count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import DistanceSpec, ReferenceTable
from .errors import EmptyTableError
from .rng import derive_key

log = logging.getLogger(__name__)

DEFAULT_CHUNK = 1 << 15

# spawn-key tag for pilot runs, keeps them off the main proposal streams
_PILOT_TAG = 0x50494C54


def distance(spec, s, s_obs):
    """Distance between one statistic vector and the observation."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    s_obs = np.atleast_1d(np.asarray(s_obs, dtype=float))
    if s.shape != s_obs.shape:
        raise ValueError("s and s_obs must have the same dimension")
    return float(spec.distances(s[None, :], s_obs)[0])


# --------------------------------------------------------------------------
# PCA
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PcaProjection:
    """Principal axes of a statistics sample.

    ``basis`` rows are orthonormal and sorted by decreasing eigenvalue;
    ``spectrum`` keeps every eigenvalue of the sample covariance (clipped
    at zero) while ``eigenvalues`` holds the retained ones.
    """

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    retained_variance_fraction: float
    spectrum: np.ndarray

    @property
    def k(self):
        return self.basis.shape[0]

    def project(self, stats, whiten=False):
        z = (np.atleast_2d(np.asarray(stats, dtype=float)) - self.mean) @ self.basis.T
        if whiten:
            z = z / np.sqrt(self.eigenvalues)
        return z

    def to_meta(self):
        return {"mean": self.mean.tolist(), "basis": self.basis.tolist(),
                "eigenvalues": self.eigenvalues.tolist(),
                "retained_variance_fraction": self.retained_variance_fraction,
                "spectrum": self.spectrum.tolist()}


def fit_pca(stats, k=None, variance_fraction=0.95):
    """PCA of ``stats`` (rows are samples).

    With ``k=None`` the smallest k reaching ``variance_fraction`` of the
    total variance is kept. Directions with zero variance are never kept,
    so the effective k can be smaller than requested.
    """
    stats = np.atleast_2d(np.asarray(stats, dtype=float))
    n_samples, n = stats.shape
    if n_samples <= n:
        raise ValueError(f"PCA needs more samples ({n_samples}) than statistics ({n})")
    if k is not None and not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    mean = stats.mean(axis=0)
    cov = np.cov(stats, rowvar=False, ddof=1).reshape(n, n)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    tol = max(vals[0], 0.0) * n * np.finfo(float).eps * 10
    vals = np.where(vals > tol, vals, 0.0)
    total = vals.sum()
    if total <= 0:
        raise ValueError("statistics have zero variance; nothing to project")
    positive = int(np.count_nonzero(vals))
    if k is None:
        cum = np.cumsum(vals) / total
        k = int(np.searchsorted(cum, variance_fraction - 1e-12) + 1)
    k = min(k, positive)
    basis = vecs[:, :k].T.copy()
    # deterministic sign: largest-magnitude entry of each axis is positive
    flip = np.sign(basis[np.arange(k), np.argmax(np.abs(basis), axis=1)])
    basis *= flip[:, None]
    return PcaProjection(mean, basis, vals[:k].copy(), float(vals[:k].sum() / total), vals)


# --------------------------------------------------------------------------
# proposals
# --------------------------------------------------------------------------

def simulate_proposals(model, prior, key, start, stop, transform=None):
    """Parameters and (optionally transformed) statistics for indices [start, stop)."""
    idx = np.arange(start, stop, dtype=np.uint64)
    thetas = prior.sample_batch(key, idx)
    stats = np.asarray(model.simulate_batch(thetas, key, idx), dtype=float)
    if stats.ndim == 1:
        stats = stats[:, None]
    if transform is not None:
        stats = transform.project(stats)
    return thetas, stats


def _chunks(start, stop, size):
    for lo in range(start, stop, size):
        yield lo, min(lo + size, stop)


def _map_chunks(fn, ranges, workers):
    if workers <= 1 or len(ranges) <= 1:
        return [fn(r) for r in ranges]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, ranges))


def pilot_statistics(model, prior, n=1000, seed=0, transform=None):
    """Statistics of ``n`` prior-predictive draws on streams apart from the main run."""
    if n < 2:
        raise ValueError("pilot runs need n >= 2")
    key = derive_key(seed, _PILOT_TAG)
    return simulate_proposals(model, prior, key, 0, n, transform)[1]


def pilot_covariance(model, prior, n=1000, seed=0, transform=None):
    """Sample covariance of the statistics of ``n`` prior-predictive draws."""
    stats = pilot_statistics(model, prior, n, seed, transform)
    return np.atleast_2d(np.cov(stats, rowvar=False, ddof=1))


@dataclass(frozen=True)
class FixedEpsilon:
    """Keep every proposal with distance < epsilon.

    Stops at the ``target``-th acceptance (if given) or after
    ``max_proposals`` proposals, whichever comes first.
    """

    epsilon: float
    target: int = None
    max_proposals: int = 10_000_000

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.target is not None and self.target < 1:
            raise ValueError("target must be >= 1")
        if self.max_proposals < 1:
            raise ValueError("max_proposals must be >= 1")


@dataclass(frozen=True)
class RetainBest:
    """Run exactly ``budget`` proposals and keep the ``n`` closest."""

    n: int
    budget: int

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not 1 <= self.n <= self.budget:
            raise ValueError("n must lie in [1, budget]")


def run_rejection(model, prior, s_obs, spec, mode, seed=0, key=None, workers=1,
                  chunk_size=DEFAULT_CHUNK, transform=None):
    """Rejection sampler returning a :class:`ReferenceTable`.

    ``key`` overrides the key derived from ``seed`` (experiment harnesses
    pass per-replicate keys). ``transform`` (e.g. a :class:`PcaProjection`)
    maps raw statistics before distances are taken; ``s_obs`` is given in
    the raw space and is transformed the same way.
    """
    key = derive_key(seed) if key is None else tuple(key)
    s_obs = np.atleast_1d(np.asarray(s_obs, dtype=float))
    if transform is not None:
        s_obs = transform.project(s_obs)[0]
    meta = {"key": list(key)}
    if transform is not None:
        meta["pca"] = transform.to_meta()

    def work(rng):
        thetas, stats = simulate_proposals(model, prior, key, rng[0], rng[1], transform)
        return thetas, stats, spec.distances(stats, s_obs)

    if isinstance(mode, RetainBest):
        parts = _map_chunks(work, list(_chunks(0, mode.budget, chunk_size)), workers)
        thetas = np.concatenate([p[0] for p in parts])
        stats = np.concatenate([p[1] for p in parts])
        dist = np.concatenate([p[2] for p in parts])
        keep = np.sort(np.argsort(dist, kind="stable")[:mode.n])
        meta.update(mode="retain_best", n=mode.n, budget=mode.budget)
        return ReferenceTable(thetas[keep], stats[keep], mode.budget, float(dist[keep].max()),
                              s_obs, spec, seed, True, meta)

    if not isinstance(mode, FixedEpsilon):
        raise TypeError(f"unknown sampling mode {mode!r}")
    target = mode.target
    kept_t, kept_s = [], []
    n_kept = 0
    proposals = 0
    ranges = list(_chunks(0, mode.max_proposals, chunk_size))
    step = max(1, workers)
    for i in range(0, len(ranges), step):
        batch = ranges[i:i + step]
        for (lo, hi), (thetas, stats, dist) in zip(batch, _map_chunks(work, batch, workers)):
            hit = np.flatnonzero(dist < mode.epsilon)
            if target is not None and n_kept + hit.size >= target:
                hit = hit[:target - n_kept]
                proposals = lo + int(hit[-1]) + 1
                kept_t.append(thetas[hit])
                kept_s.append(stats[hit])
                n_kept = target
                break
            kept_t.append(thetas[hit])
            kept_s.append(stats[hit])
            n_kept += hit.size
            proposals = hi
        if target is not None and n_kept >= target:
            break
    if n_kept == 0:
        raise EmptyTableError(proposals)
    if target is not None and n_kept < target:
        log.warning("proposal cap %d reached with %d of %d acceptances",
                    mode.max_proposals, n_kept, target)
    meta.update(mode="fixed_epsilon", target=target, max_proposals=mode.max_proposals,
                reached_target=target is None or n_kept >= target)
    return ReferenceTable(np.concatenate(kept_t), np.concatenate(kept_s), proposals,
                          mode.epsilon, s_obs, spec, seed, False, meta)


__all__ = ["DistanceSpec", "PcaProjection", "FixedEpsilon", "RetainBest", "distance",
           "fit_pca", "simulate_proposals", "pilot_statistics", "pilot_covariance",
           "run_rejection"]
