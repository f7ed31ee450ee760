"""ABC-GLM posterior estimation.

The retained sample is fitted by a normal linear model ``s = C theta + c0 + e``
with ``e ~ N(0, Sigma_s)``; combined with a Gaussian-peak smoothing of the
retained parameters this gives the posterior as a Gaussian mixture with one
shared covariance ``T`` and one component per retained parameter.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import log_ndtr, logsumexp

from .core import ParameterDomain
from .curves import DensityCurve
from .errors import DegenerateError, NotPositiveDefiniteError, RankDeficiencyError
from . import kernels

LOG_2PI = np.log(2.0 * np.pi)

# relative floor added to a singular residual covariance, and the absolute
# fallback for statistics with zero sample variance
SIGMA_FLOOR_REL = 1e-8
SIGMA_FLOOR_ABS = 1e-12
# residual covariances with condition number above this count as singular
SIGMA_MAX_COND = 1e12


@dataclass(frozen=True, eq=False)
class GlmFit:
    """OLS estimates of the truncated model: C (n x m), c0 (n), Sigma_s (n x n)."""

    C: np.ndarray
    c0: np.ndarray
    Sigma_s: np.ndarray
    n_samples: int
    stat_variance: np.ndarray = None
    stat_scale: np.ndarray = None

    @property
    def n_stats(self):
        return self.C.shape[0]

    @property
    def n_params(self):
        return self.C.shape[1]


def _rank_check(X, names):
    _, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(X.shape) * np.finfo(float).eps * 10 if diag.size else 0.0
    rank = int(np.count_nonzero(diag > tol))
    if rank < X.shape[1]:
        raise RankDeficiencyError([names[i] for i in sorted(piv[rank:])])


def fit_glm(table):
    """Least-squares fit of statistics on parameters (with intercept).

    Residual covariance uses the ``1/(N - m)`` normalization.
    """
    P, S = table.params, table.stats
    N, m = P.shape
    if N < m + 2:
        raise DegenerateError(f"GLM fit needs N >= m + 2 rows, got N={N}, m={m}")
    X = np.column_stack([np.ones(N), P])
    _rank_check(X, ["intercept"] + [f"theta_{k + 1}" for k in range(m)])
    coef, *_ = np.linalg.lstsq(X, S, rcond=None)
    resid = S - X @ coef
    # lstsq leaves O(eps) residual means; remove them so the intercept
    # absorbs the full mean
    shift = resid.mean(axis=0)
    coef[0] += shift
    resid -= shift
    sigma = resid.T @ resid / (N - m)
    sigma = 0.5 * (sigma + sigma.T)
    var = S.var(axis=0, ddof=1) if N > 1 else np.zeros(S.shape[1])
    scale = np.sqrt(np.mean(S * S, axis=0))
    return GlmFit(coef[1:].T.copy(), coef[0].copy(), sigma, N, var, scale)


def fit_glm_uniform(model, domain, s_obs, spec, epsilon, n, seed=0, workers=1):
    """GLM fitted on a fresh rejection sample drawn under a uniform prior on the hull.

    The regular fit uses the retained sample itself; this variant removes
    the prior's influence on the least-squares estimates when the prior is
    not uniform.
    """
    from .core import Prior, Uniform
    from .sampler import FixedEpsilon, run_rejection

    flat = Prior([Uniform(lo, hi) for lo, hi in zip(domain.lows, domain.highs)])
    table = run_rejection(model, flat, s_obs, spec, FixedEpsilon(epsilon, n), seed=seed,
                          workers=workers)
    return fit_glm(table)


def regularized_sigma(fit):
    """Residual covariance made invertible when the fit is degenerate.

    Returns ``(matrix, floored)``. A floor of ``1e-8`` times each
    statistic's sample variance (``1e-12`` where that is zero) is added to
    the diagonal only when the raw matrix is singular or ill-conditioned.
    Singular is judged against the magnitude of the statistics: residual
    variance at rounding level (constant statistics fit exactly, up to
    roundoff) counts as zero. The absolute floor is scaled by the squared
    statistic magnitude when that exceeds one.
    """
    sigma = np.asarray(fit.Sigma_s, dtype=float)
    n = sigma.shape[0]
    vals = np.linalg.eigvalsh(sigma)
    scale = fit.stat_scale if fit.stat_scale is not None else np.zeros(n)
    roundoff = 64 * np.finfo(float).eps * max(1.0, float(np.max(scale ** 2, initial=0.0)))
    if vals[0] > roundoff and vals[-1] / vals[0] < SIGMA_MAX_COND:
        return sigma, False
    var = fit.stat_variance if fit.stat_variance is not None else np.zeros(n)
    floor = np.where(var > 0, SIGMA_FLOOR_REL * var,
                     SIGMA_FLOOR_ABS * np.maximum(1.0, scale ** 2))
    floored = sigma + np.diag(floor)
    try:
        linalg.cholesky(floored, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("residual covariance singular even after flooring") from exc
    return floored, True


@dataclass(frozen=True, eq=False)
class SmoothingSpec:
    """Standard deviations of the Gaussian peaks placed on retained parameters."""

    sigmas: np.ndarray

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.sigmas, dtype=float))
        if np.any(~(s > 0)) or not np.all(np.isfinite(s)):
            raise ValueError("smoothing standard deviations must be finite and > 0")
        object.__setattr__(self, "sigmas", s)

    @property
    def Sigma_theta(self):
        return np.diag(self.sigmas ** 2)

    @property
    def variances(self):
        return self.sigmas ** 2


def choose_smoothing(table, domain, scale=1.0):
    """``sigma_k = scale * range_k / N`` (equals 1/N on a unit domain)."""
    if not scale > 0:
        raise ValueError("scale must be > 0")
    return SmoothingSpec(scale * domain.lengths / table.n)


def truncated_prior_density(table, smoothing, theta):
    """Smoothed truncated prior: average of Gaussian peaks over retained parameters."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    P = table.params
    if theta.shape[1] != P.shape[1]:
        raise ValueError("theta dimension does not match the table")
    sig = smoothing.sigmas
    logw = np.full(P.shape[0], -np.log(P.shape[0]))
    lse = kernels.mixture_logsumexp(theta / sig, P / sig, logw)
    const = -np.sum(np.log(sig)) - 0.5 * P.shape[1] * LOG_2PI
    return np.exp(lse + const)


def glm_likelihood(fit, s_obs, theta, sigma=None):
    """Gaussian likelihood of the fitted truncated model at ``s_obs``."""
    sigma = regularized_sigma(fit)[0] if sigma is None else sigma
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    r = np.asarray(s_obs, dtype=float)[None, :] - theta @ fit.C.T - fit.c0
    chol = linalg.cholesky(sigma, lower=True)
    z = linalg.solve_triangular(chol, r.T, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return np.exp(-0.5 * np.sum(z * z, axis=0) - 0.5 * logdet - 0.5 * sigma.shape[0] * LOG_2PI)


# --------------------------------------------------------------------------
# posterior mixture
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PosteriorMixture:
    """Posterior density ``sum_j c_j N(theta; t_j, T)`` restricted to the domain hull.

    ``log_weights`` are the unnormalized log c_j; ``log_normalizer`` makes
    the density integrate to one over the hull of ``domain``.
    """

    T: np.ndarray
    means: np.ndarray
    log_weights: np.ndarray
    domain: ParameterDomain
    log_normalizer: float = np.nan
    sigma_floored: bool = False
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        T = np.atleast_2d(np.asarray(self.T, dtype=float))
        try:
            prec_chol = linalg.cholesky(np.linalg.inv(T), lower=True)
        except linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("posterior covariance T is not SPD") from exc
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "_white", prec_chol)

    @property
    def dim(self):
        return self.T.shape[0]

    def whiten(self, theta):
        # (x - t)^T T^{-1} (x - t) = |L^T x - L^T t|^2 with T^{-1} = L L^T
        return np.atleast_2d(theta) @ self._white

    def unnormalized_log_density(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        return kernels.mixture_logsumexp(self.whiten(theta), self.whiten(self.means),
                                         self.log_weights)

    def log_density(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        out = self.unnormalized_log_density(theta) - self.log_normalizer
        return np.where(self.domain.in_hull(theta), out, -np.inf)

    def density(self, theta):
        return np.exp(self.log_density(theta))


def _log_interval_mass(lo, hi, mean, sd):
    """log(Phi((hi-mean)/sd) - Phi((lo-mean)/sd)) without upper-tail cancellation."""
    a = (lo - mean) / sd
    b = (hi - mean) / sd
    # reflect components sitting in the upper tail so both CDFs are small
    upper = a > 0
    a2 = np.where(upper, -b, a)
    b2 = np.where(upper, -a, b)
    la, lb = log_ndtr(a2), log_ndtr(b2)
    with np.errstate(divide="ignore"):
        return lb + np.log1p(-np.exp(np.minimum(la - lb, 0.0)))


def _log_normalizer_1d(mix):
    T = mix.T[0, 0]
    sd = np.sqrt(T)
    lo, hi = mix.domain.lows[0], mix.domain.highs[0]
    lm = _log_interval_mass(lo, hi, mix.means[:, 0], sd)
    return float(logsumexp(mix.log_weights + lm) + 0.5 * (LOG_2PI + np.log(T)))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _log_normalizer_2d(mix, max_nodes=400_000):
    """Outer Gauss-Legendre panels in theta_1, exact conditional mass in theta_2."""
    T = mix.T
    s1 = np.sqrt(T[0, 0])
    cond_var = T[1, 1] - T[0, 1] ** 2 / T[0, 0]
    cond_sd = np.sqrt(cond_var)
    slope = T[0, 1] / T[0, 0]
    (a1, a2), (b1, b2) = mix.domain.lows, mix.domain.highs
    t1, t2 = mix.means[:, 0], mix.means[:, 1]
    # panels of width <= sd/2, dropped where every component is > 40 sd away
    width = 0.5 * s1
    edges = np.linspace(a1, b1, int(np.ceil((b1 - a1) / width)) + 1)
    lo_c, hi_c = np.sort(t1 - 40 * s1), np.sort(t1 + 40 * s1)
    mids_lo, mids_hi = edges[:-1], edges[1:]
    near = (np.searchsorted(lo_c, mids_hi, side="right")
            - np.searchsorted(hi_c, mids_lo, side="left")) > 0
    left, right = mids_lo[near], mids_hi[near]
    if left.size * _GL_X.size > max_nodes:
        raise DegenerateError("2-D normalization needs too many quadrature nodes; "
                              "increase the smoothing scale")
    half = 0.5 * (right - left)
    nodes = (0.5 * (right + left))[:, None] + half[:, None] * _GL_X[None, :]
    weights = half[:, None] * _GL_W[None, :]
    x = nodes.ravel()
    w = weights.ravel()
    total = -np.inf
    step = max(1, 4_000_000 // max(1, t1.size))
    for lo in range(0, x.size, step):
        xs = x[lo:lo + step, None]
        mu2 = t2[None, :] + slope * (xs - t1[None, :])
        logv = (mix.log_weights[None, :] - 0.5 * (xs - t1[None, :]) ** 2 / T[0, 0]
                + _log_interval_mass(a2, b2, mu2, cond_sd))
        per_node = logsumexp(logv, axis=1) + np.log(w[lo:lo + step])
        total = np.logaddexp(total, logsumexp(per_node))
    return float(total + 0.5 * (LOG_2PI + np.log(cond_var)))


def _log_normalizer_mc(mix, n_draws=200_000, seed=0):
    """Exact whole-space mass times a Monte Carlo in-domain fraction."""
    m = mix.dim
    logdet = np.linalg.slogdet(mix.T)[1]
    log_total = float(logsumexp(mix.log_weights) + 0.5 * (m * LOG_2PI + logdet))
    rng = np.random.default_rng(seed)
    p = np.exp(mix.log_weights - logsumexp(mix.log_weights))
    comp = rng.choice(p.size, size=n_draws, p=p)
    chol = np.linalg.cholesky(mix.T)
    draws = mix.means[comp] + rng.standard_normal((n_draws, m)) @ chol.T
    frac = np.mean(mix.domain.in_hull(draws))
    if frac == 0:
        raise DegenerateError("posterior mixture puts no mass inside the parameter domain")
    return log_total + float(np.log(frac))


def _normalizer(mix, mc_draws=200_000, mc_seed=0):
    if mix.dim == 1:
        return _log_normalizer_1d(mix), "analytic-1d"
    if mix.dim == 2:
        return _log_normalizer_2d(mix), "gauss-legendre-2d"
    return _log_normalizer_mc(mix, mc_draws, mc_seed), "monte-carlo"


# mirror images further than this many smoothing sds from a border are dropped
REFLECT_REACH = 9.0


def reflected_centers(params, domain, sigmas, reach=REFLECT_REACH):
    """Retained parameters plus their mirror images at the hull faces.

    A point within ``reach`` smoothing sds of a face is mirrored across it,
    one dimension at a time.
    """
    out = [params]
    for k in range(params.shape[1]):
        for border in (domain.lows[k], domain.highs[k]):
            near = params[np.abs(params[:, k] - border) < reach * sigmas[k]]
            if near.size:
                mirrored = near.copy()
                mirrored[:, k] = 2.0 * border - mirrored[:, k]
                out.append(mirrored)
    return np.concatenate(out)


def build_posterior(fit, smoothing, table, s_obs=None, domain=None, mc_draws=200_000,
                    mc_seed=0, reflect=False):
    """Gaussian-mixture posterior from a GLM fit and the smoothed truncated prior.

    ``T = (C' S^-1 C + Sth^-1)^-1``, ``v_j = C' S^-1 (s_obs - c0) + Sth^-1 theta_j``,
    ``t_j = T v_j`` and ``log c_j = -(theta_j' Sth^-1 theta_j - v_j' T v_j) / 2``.
    Parameters are centered on the sample mean first; this shifts every
    log weight by the same constant and keeps the two quadratic forms small.

    ``reflect=True`` smooths the truncated prior with peaks mirrored at the
    domain hull, the usual boundary fix for kernel smoothers. Mirrored
    peaks enter as extra components with the same weight formula.
    """
    s_obs = table.s_obs if s_obs is None else np.atleast_1d(np.asarray(s_obs, dtype=float))
    if domain is None:
        lo, hi = table.params.min(axis=0), table.params.max(axis=0)
        domain = ParameterDomain.box(lo, np.where(hi > lo, hi, lo + 1.0))
    sigma, floored = regularized_sigma(fit)
    P = table.params
    if reflect:
        P = reflected_centers(P, domain, smoothing.sigmas)
    center = P.mean(axis=0)
    Pc = P - center
    c0c = fit.c0 + fit.C @ center
    inv_sth = 1.0 / smoothing.variances
    C = fit.C
    sinv_C = linalg.cho_solve(linalg.cho_factor(sigma, lower=True), C)
    t_inv = C.T @ sinv_C + np.diag(inv_sth)
    t_inv = 0.5 * (t_inv + t_inv.T)
    try:
        chol = linalg.cho_factor(t_inv, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("T^-1 is not positive definite") from exc
    T = linalg.cho_solve(chol, np.eye(t_inv.shape[0]))
    T = 0.5 * (T + T.T)
    if np.any(np.linalg.eigvalsh(T) <= 0):
        raise NotPositiveDefiniteError("posterior covariance T is not SPD")
    b = sinv_C.T @ (s_obs - c0c)
    V = b[None, :] + Pc * inv_sth
    Tm = V @ T
    log_w = -0.5 * (np.sum(Pc * Pc * inv_sth, axis=1) - np.sum(Tm * V, axis=1))
    means = Tm + center
    diag = {"sigma_floored": floored, "Sigma_s_used": sigma.tolist(), "reflected": reflect,
            "n_components": int(P.shape[0])}
    mix = PosteriorMixture(T, means, log_w, domain, np.nan, floored, diag)
    log_z, method = _normalizer(mix, mc_draws, mc_seed)
    diag["normalization"] = method
    return PosteriorMixture(T, means, log_w, domain, log_z, floored, diag)


def posterior_density(mix, theta):
    """Normalized posterior density; zero outside the domain hull."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0 or theta.shape[-1] != mix.dim:
        theta = theta.reshape(-1, mix.dim)
    return mix.density(theta)


def marginal_posterior(mix, k, grid):
    """Marginal posterior curve of parameter ``k`` (0-based) on ``grid``.

    Each component contributes a univariate normal with the k-th diagonal
    entry of T as variance; the curve is normalized by the trapezoidal rule
    on the grid and set to zero outside the domain hull.
    """
    if not 0 <= k < mix.dim:
        raise IndexError(f"parameter index {k} out of range for dimension {mix.dim}")
    grid = np.asarray(grid, dtype=float)
    sd = np.sqrt(mix.T[k, k])
    lse = kernels.gaussian_logsum_1d(grid, mix.means[:, k], mix.log_weights, sd)
    lo, hi = mix.domain.lows[k], mix.domain.highs[k]
    warnings = []
    if grid[0] > lo or grid[-1] < hi:
        warnings.append(f"grid [{grid[0]}, {grid[-1]}] does not cover support [{lo}, {hi}]")
    finite = lse[np.isfinite(lse)]
    shift = finite.max() if finite.size else 0.0
    values = np.exp(lse - shift)
    return DensityCurve.from_values(grid, values, ((lo, hi),), warnings)


__all__ = ["GlmFit", "SmoothingSpec", "PosteriorMixture", "fit_glm", "fit_glm_uniform",
           "choose_smoothing", "truncated_prior_density", "build_posterior", "posterior_density",
           "marginal_posterior", "regularized_sigma", "glm_likelihood"]
