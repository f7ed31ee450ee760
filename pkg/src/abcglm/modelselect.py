"""Marginal densities and Bayes factors from ABC-GLM fits."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import expit, logsumexp

from .core import ReferenceTable
from .errors import DegenerateError
from .glm import LOG_2PI, choose_smoothing, fit_glm, regularized_sigma
from .rng import derive_key
from .sampler import DEFAULT_CHUNK, _chunks, _map_chunks, simulate_proposals


@dataclass(frozen=True)
class AcceptanceRate:
    rate: float
    stderr: float
    accepted: int
    proposals: int

    @property
    def degenerate(self):
        return self.accepted == 0


def estimate_acceptance_rate(model, prior, s_obs, spec, epsilon, proposals, seed=0,
                             key=None, workers=1, chunk_size=DEFAULT_CHUNK):
    """Fraction of prior-predictive statistics inside the epsilon-ball."""
    if proposals < 1:
        raise ValueError("proposals must be >= 1")
    key = derive_key(seed) if key is None else tuple(key)
    s_obs = np.atleast_1d(np.asarray(s_obs, dtype=float))

    def work(rng):
        _, stats = simulate_proposals(model, prior, key, rng[0], rng[1])
        return int(np.count_nonzero(spec.distances(stats, s_obs) < epsilon))

    accepted = sum(_map_chunks(work, list(_chunks(0, proposals, chunk_size)), workers))
    rate = accepted / proposals
    return AcceptanceRate(rate, float(np.sqrt(rate * (1 - rate) / proposals)), accepted,
                          proposals)


@dataclass(frozen=True)
class MarginalDensityEstimate:
    """Estimate of the model's marginal density at s_obs (log-domain primary)."""

    log_value: float
    acceptance_rate: float
    acceptance_rate_stderr: float
    N: int
    degenerate: bool = False

    @property
    def value(self):
        return float(np.exp(self.log_value))


def model_marginal_density(fit, smoothing, table, s_obs=None, acceptance_rate=None,
                           acceptance_rate_stderr=None):
    """``A/(N |2 pi D|^1/2) sum_j exp(-(s_obs - m_j)' D^-1 (s_obs - m_j) / 2)``

    with ``D = Sigma_s + C Sigma_theta C'`` and ``m_j = c0 + C theta_j``.
    The acceptance rate defaults to the table's own N / total_proposals.
    """
    s_obs = table.s_obs if s_obs is None else np.atleast_1d(np.asarray(s_obs, dtype=float))
    rate = table.acceptance_rate if acceptance_rate is None else float(acceptance_rate)
    if acceptance_rate_stderr is None:
        props = table.total_proposals
        acceptance_rate_stderr = float(np.sqrt(rate * (1 - rate) / props)) if rate <= 1 else 0.0
    N = table.n
    if rate <= 0:
        return MarginalDensityEstimate(-np.inf, 0.0, acceptance_rate_stderr, N, True)
    sigma, _ = regularized_sigma(fit)
    D = sigma + fit.C @ np.diag(smoothing.variances) @ fit.C.T
    D = 0.5 * (D + D.T)
    try:
        chol = linalg.cholesky(D, lower=True)
    except linalg.LinAlgError as exc:
        raise DegenerateError("marginal covariance D is not positive definite") from exc
    resid = s_obs[None, :] - (fit.c0[None, :] + table.params @ fit.C.T)
    z = linalg.solve_triangular(chol, resid.T, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    log_f = (np.log(rate) - np.log(N) - 0.5 * (D.shape[0] * LOG_2PI + logdet)
             + logsumexp(-0.5 * np.sum(z * z, axis=0)))
    return MarginalDensityEstimate(float(log_f), rate, float(acceptance_rate_stderr), N, False)


@dataclass(frozen=True)
class BayesFactorResult:
    log_B_AB: float
    posterior_prob_A: float
    prior_prob_A: float
    infinite: bool = False

    @property
    def B_AB(self):
        return float(np.exp(self.log_B_AB))


def bayes_factor(est_A, est_B, prior_prob_A=0.5):
    """Bayes factor of A over B and the posterior probability of A."""
    if not 0 < prior_prob_A < 1:
        raise ValueError("prior_prob_A must lie in (0, 1)")
    if est_B.degenerate or est_B.log_value == -np.inf:
        if est_A.degenerate or est_A.log_value == -np.inf:
            raise DegenerateError("both marginal density estimates are zero")
        return BayesFactorResult(np.inf, 1.0, prior_prob_A, True)
    log_b = est_A.log_value - est_B.log_value
    if est_A.degenerate:
        return BayesFactorResult(-np.inf, 0.0, prior_prob_A, False)
    post = float(expit(log_b + np.log(prior_prob_A) - np.log1p(-prior_prob_A)))
    return BayesFactorResult(float(log_b), post, prior_prob_A, False)


# --------------------------------------------------------------------------
# acceptance-rate sweep
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    acceptance_rate: float
    log_bayes_factor: float
    n_retained: int
    flag: str


def _sorted_proposals(model, prior, s_obs, spec, key, budget, workers, chunk_size):
    def work(rng):
        return simulate_proposals(model, prior, key, rng[0], rng[1])

    parts = _map_chunks(work, list(_chunks(0, budget, chunk_size)), workers)
    thetas = np.concatenate([p[0] for p in parts])
    stats = np.concatenate([p[1] for p in parts])
    dist = spec.distances(stats, s_obs)
    order = np.argsort(dist, kind="stable")
    return thetas[order], stats[order], dist[order]


def _log_marginal(thetas, stats, dist, n, budget, s_obs, spec, prior, scale):
    keep_t, keep_s = thetas[:n], stats[:n]
    table = ReferenceTable(keep_t, keep_s, budget, float(dist[n - 1]), s_obs, spec,
                           inclusive=True)
    fit = fit_glm(table)
    smoothing = choose_smoothing(table, prior.domain, scale)
    return model_marginal_density(fit, smoothing, table).log_value


def stability_sweep(model_A, model_B, prior_A, prior_B, s_obs, acceptance_rates, budget,
                    seed=0, spec=None, smoothing_scale=1.0, independent=False, workers=1,
                    chunk_size=DEFAULT_CHUNK):
    """log Bayes factor of A over B as a function of the acceptance rate.

    Both models use the same budget, N and key at every point. By default
    each model is simulated once and the points are nested retain-best
    subsets of that proposal stream; ``independent=True`` draws a fresh
    stream per point.
    """
    from .core import DistanceSpec

    spec = DistanceSpec() if spec is None else spec
    s_obs = np.atleast_1d(np.asarray(s_obs, dtype=float))
    rates = [float(a) for a in acceptance_rates]
    if any(not 0 < a <= 1 for a in rates):
        raise ValueError("acceptance rates must lie in (0, 1]")
    m_max = max(prior_A.dim, prior_B.dim)
    base_key = derive_key(seed)

    def streams(key):
        return (_sorted_proposals(model_A, prior_A, s_obs, spec, key, budget, 1, chunk_size),
                _sorted_proposals(model_B, prior_B, s_obs, spec, key, budget, 1, chunk_size))

    shared = None if independent else streams(base_key)

    def point(i):
        a = rates[i]
        n = int(round(a * budget))
        if n < m_max + 2:
            return SweepPoint(a, float("nan"), n, "unreliable")
        sa, sb = shared if shared is not None else streams(derive_key(seed, i))
        try:
            la = _log_marginal(*sa, n, budget, s_obs, spec, prior_A, smoothing_scale)
            lb = _log_marginal(*sb, n, budget, s_obs, spec, prior_B, smoothing_scale)
        except DegenerateError:
            return SweepPoint(a, float("nan"), n, "degenerate")
        return SweepPoint(a, float(la - lb), n, "ok")

    idx = list(range(len(rates)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(point, idx))
    return [point(i) for i in idx]


__all__ = ["AcceptanceRate", "MarginalDensityEstimate", "BayesFactorResult", "SweepPoint",
           "estimate_acceptance_rate", "model_marginal_density", "bayes_factor",
           "stability_sweep"]
