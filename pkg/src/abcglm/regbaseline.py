"""ABC-REG: linear regression adjustment of retained parameters, plus KDE."""

from dataclasses import dataclass

import numpy as np

from .curves import DensityCurve, in_support, normalize_intervals, support_grid
from .errors import RankDeficiencyError
from . import kernels


def hamilton_transform(theta, a, b):
    """``ln(tan(pi/2 * (theta - a) / (b - a)))``, defined on the open interval (a, b)."""
    theta = np.asarray(theta, dtype=float)
    if np.any(~((theta > a) & (theta < b))):
        raise ValueError(f"Hamilton transform is undefined outside the open interval ({a}, {b})")
    return np.log(np.tan(0.5 * np.pi * (theta - a) / (b - a)))


def hamilton_inverse(y, a, b):
    return a + (b - a) * (2.0 / np.pi) * np.arctan(np.exp(np.asarray(y, dtype=float)))


@dataclass(frozen=True, eq=False)
class RegFit:
    """theta = M s + m0 + e; M is m x n."""

    M: np.ndarray
    m0: np.ndarray


def fit_reg(params, stats, weights=None):
    params = np.atleast_2d(params)
    stats = np.atleast_2d(stats)
    N, n = stats.shape
    if N < n + 2:
        raise RankDeficiencyError([], f"regression needs N >= n + 2 rows, got N={N}, n={n}")
    X = np.column_stack([np.ones(N), stats])
    if weights is not None:
        w = np.sqrt(np.asarray(weights, dtype=float))
        X, Y = X * w[:, None], params * w[:, None]
    else:
        Y = params
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= sv[0] * max(X.shape) * np.finfo(float).eps * 10:
        # name the statistics with (numerically) no spread
        spread = np.ptp(stats, axis=0)
        names = [f"s_{k + 1}" for k in np.flatnonzero(spread == 0)] or ["statistics"]
        raise RankDeficiencyError(names)
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    return RegFit(coef[1:].T.copy(), coef[0].copy())


def reg_adjust(table, s_obs=None, transform=None, weighting=None):
    """Adjusted parameters ``theta_j - M (s_j - s_obs)``.

    ``transform`` is ``None`` or a per-dimension sequence whose entries are
    ``None`` or ``(a, b)`` bounds for the Hamilton transform; the
    regression then runs on transformed values and the result is mapped
    back. ``weighting="epanechnikov"`` weights rows by ``1 - (d/eps)^2``.
    """
    s_obs = table.s_obs if s_obs is None else np.atleast_1d(np.asarray(s_obs, dtype=float))
    P = table.params.copy()
    bounds = [None] * P.shape[1] if transform is None else list(transform)
    if len(bounds) != P.shape[1]:
        raise ValueError("transform needs one entry per parameter dimension")
    for k, ab in enumerate(bounds):
        if ab is not None:
            P[:, k] = hamilton_transform(P[:, k], *ab)
    weights = None
    if weighting == "epanechnikov":
        d = table.distances()
        eps = table.epsilon if table.epsilon > 0 else 1.0
        weights = np.clip(1.0 - (d / eps) ** 2, 0.0, None)
    elif weighting not in (None, "none"):
        raise ValueError(f"unknown weighting {weighting!r}")
    fit = fit_reg(P, table.stats, weights)
    adjusted = P - (table.stats - s_obs[None, :]) @ fit.M.T
    for k, ab in enumerate(bounds):
        if ab is not None:
            adjusted[:, k] = hamilton_inverse(adjusted[:, k], *ab)
    return adjusted


def silverman_bandwidth(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    sd = values.std(ddof=1) if n > 1 else 0.0
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(sd, (q75 - q25) / 1.349) if q75 > q25 else sd
    return 0.9 * spread * n ** (-0.2)


def _reflected(values, lo, hi, h, reach=12.0):
    """Values plus their mirror images at the finite ends of [lo, hi].

    Mirror images further than ``reach`` bandwidths from the border
    contribute less than exp(-reach**2 / 2) and are skipped.
    """
    out = [values]
    if np.isfinite(lo):
        out.append(2 * lo - values[values - lo < reach * h])
    if np.isfinite(hi):
        out.append(2 * hi - values[hi - values < reach * h])
    return np.concatenate(out)


def kde_posterior(values, support=((-np.inf, np.inf),), bandwidth="auto", grid=None,
                  n_grid=512, reflect=True, bw_multiplier=1.0):
    """Gaussian KDE on ``grid``, reflected at every finite support border,
    zeroed outside the support and renormalized by the trapezoidal rule."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 2:
        raise ValueError("KDE needs at least two values")
    support = normalize_intervals(support)
    warnings = []
    inside = in_support(values, support)
    if not inside.all():
        warnings.append(f"{int((~inside).sum())} values outside the support were dropped")
        values = values[inside]
        if values.size < 2:
            raise ValueError("fewer than two values inside the support")
    if bandwidth in (None, "auto"):
        h = silverman_bandwidth(values) * bw_multiplier
        lo, hi = support[0][0], support[-1][1]
        span = hi - lo if np.isfinite(hi - lo) else max(1.0, abs(values[0]))
        # a constant sample gives a roundoff-sized spread rather than exactly 0
        if not h > 1e-12 * span:
            h = 1e-3 * span
            warnings.append("zero sample spread; bandwidth set to 1e-3 of the support")
    else:
        h = float(bandwidth) * bw_multiplier
        if not h > 0:
            raise ValueError("bandwidth must be > 0")
    if grid is None:
        lo, hi = support[0][0], support[-1][1]
        lo = lo if np.isfinite(lo) else values.min() - 6 * h
        hi = hi if np.isfinite(hi) else values.max() + 6 * h
        grid = support_grid([(lo, hi)] if len(support) == 1 else support, n_grid, lo, hi)
    grid = np.asarray(grid, dtype=float)
    if reflect:
        # each support interval is smoothed from its own values, mirrored at
        # its own ends, so no mass crosses a gap in either direction
        dens = np.zeros(grid.size)
        for lo, hi in support:
            at = (grid >= lo) & (grid <= hi)
            own = values[(values >= lo) & (values <= hi)]
            if at.any() and own.size:
                centers = _reflected(own, lo, hi, h)
                dens[at] = np.exp(kernels.gaussian_logsum_1d(grid[at], centers,
                                                              np.zeros(centers.size), h))
    else:
        dens = np.exp(kernels.gaussian_logsum_1d(grid, values, np.zeros(values.size), h))
    dens = dens / (values.size * h * np.sqrt(2 * np.pi))
    return DensityCurve.from_values(grid, dens, support, warnings, {"bandwidth": h})


__all__ = ["RegFit", "hamilton_transform", "hamilton_inverse", "fit_reg", "reg_adjust",
           "silverman_bandwidth", "kde_posterior"]
