"""Coalescent toy model, its exact likelihood, and the method-comparison harness.

The lone parameter is the scaled mutation rate theta = 4 N mu, the lone
statistic the number of segregating sites S in a sample of ``n_seq``
sequences.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .core import DistanceSpec, Prior, SimulableModel
from .curves import DensityCurve, support_grid, trapezoid
from .errors import DegenerateError, EmptyTableError, RankDeficiencyError
from .glm import build_posterior, choose_smoothing, fit_glm, marginal_posterior
from .regbaseline import kde_posterior, reg_adjust
from .rng import PURPOSE_MODEL, derive_key
from .sampler import FixedEpsilon, run_rejection
from . import kernels

log = logging.getLogger(__name__)

DEFAULT_N_SEQ = 20
UNIFORM_PRIOR = [{"uniform": [0.005, 10.0]}]
GAP_PRIOR = [{"union": [[0.005, 3.0], [6.0, 10.0]]}]


def harmonic(n_seq):
    """a_n = sum_{i=1}^{n-1} 1/i, so that E[S] = theta * a_n."""
    return float(sum(1.0 / i for i in range(1, n_seq)))


# --------------------------------------------------------------------------
# simulators
# --------------------------------------------------------------------------

class _CountModel(SimulableModel):
    """Shared plumbing for one-parameter models with an integer statistic.

    With ``jitter=True`` the statistic is S + U(-1/2, 1/2). The jittered
    statistic has a density equal to P(S = s) at every integer s, and
    distinct values almost surely, which retain-best sweeps need.
    """

    n_params = 1
    n_stats = 1
    jitter_draw = 0

    def __init__(self, jitter=False):
        self.jitter = bool(jitter)

    def _counts(self, thetas, key, indices):
        raise NotImplementedError

    def simulate_batch(self, thetas, key, indices):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        idx = np.asarray(indices, dtype=np.uint64)
        out = self._counts(thetas[:, 0], key, idx).astype(float)
        if self.jitter:
            u = kernels.uniforms(key, idx, PURPOSE_MODEL, self.jitter_draw + 1)
            out = out + u[:, self.jitter_draw] - 0.5
        return out[:, None]

    def simulate(self, theta, stream):
        out = self.simulate_batch(np.atleast_1d(theta)[None, :], stream.key, [stream.index])
        stream.counter = self.jitter_draw + 1
        return out[0]


class CoalescentToyModel(_CountModel):
    """Segregating sites under the standard neutral coalescent."""

    def __init__(self, n_seq=DEFAULT_N_SEQ, jitter=False):
        if int(n_seq) < 2:
            raise ValueError("n_seq must be >= 2")
        super().__init__(jitter)
        self.n_seq = int(n_seq)
        # n_seq - 1 coalescence times, one Poisson draw, then the jitter
        self.jitter_draw = self.n_seq

    def _counts(self, thetas, key, indices):
        if np.any(thetas < 0):
            raise ValueError("theta must be non-negative")
        return kernels.coalescent_segsites(thetas, self.n_seq, key, indices, PURPOSE_MODEL)

    def likelihood(self, s, theta):
        return watterson_likelihood(s, theta, self.n_seq)

    def to_spec(self):
        return {"id": "coalescent", "n_seq": self.n_seq, "jitter": self.jitter}


class PoissonToyModel(_CountModel):
    """Null model for model-selection demos: S ~ Poisson(lambda)."""

    jitter_draw = 1

    def _counts(self, thetas, key, indices):
        if np.any(thetas < 0):
            raise ValueError("lambda must be non-negative")
        return kernels.poisson_counts(thetas, key, indices, PURPOSE_MODEL, 0)

    def likelihood(self, s, lam):
        lam = np.asarray(lam, dtype=float)
        s = int(s)
        with np.errstate(divide="ignore"):
            return np.exp(s * np.log(lam) - lam - gammaln(s + 1.0))

    def to_spec(self):
        return {"id": "poisson", "jitter": self.jitter}


def simulate_S(theta, n_seq, stream):
    """One draw of S for ``theta`` from ``stream``."""
    if not theta > 0:
        raise ValueError("theta must be > 0")
    return int(CoalescentToyModel(n_seq)._counts(
        np.array([float(theta)]), stream.key, np.array([stream.index], dtype=np.uint64))[0])


# --------------------------------------------------------------------------
# Watterson likelihood
# --------------------------------------------------------------------------

# cancellation check: a result this much smaller than its largest term has
# lost too many digits to be trusted
_MAX_CANCELLATION = 1e8


def segsites_pmf_convolution(s_max, theta, n_seq):
    """P(S = 0..s_max) via S = sum of independent geometrics.

    Going back in time, while k lineages remain the number of mutations
    before the next coalescence is geometric with success probability
    (k - 1) / (k - 1 + theta). The pmf is the exact convolution of these
    n_seq - 1 laws; it involves only positive terms.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    s_max = int(s_max)
    k = np.arange(s_max + 1)
    pmf = np.zeros((theta.size, s_max + 1))
    pmf[:, 0] = 1.0
    for i in range(1, n_seq):
        p = i / (i + theta)
        geo = p[:, None] * (1.0 - p)[:, None] ** k[None, :]
        new = np.empty_like(pmf)
        for row in range(theta.size):
            new[row] = np.convolve(pmf[row], geo[row])[:s_max + 1]
        pmf = new
    return pmf


def _alternating(s, theta, n_seq):
    """Closed-form alternating sum for one theta; returns (value, trustworthy)."""
    terms = []
    for i in range(1, n_seq):
        # (n-1)/theta * C(n-2, i-1) * (theta/(i+theta))^(s+1), sign (-1)^(i-1)
        log_mag = (math.log(n_seq - 1) - math.log(theta)
                   + gammaln(n_seq - 1) - gammaln(i) - gammaln(n_seq - i)
                   + (s + 1) * (math.log(theta) - math.log(i + theta)))
        terms.append((-1) ** (i - 1) * math.exp(log_mag))
    value = math.fsum(terms)
    biggest = max(abs(t) for t in terms)
    ok = value >= -1e-12 and (value == 0.0 and biggest == 0.0 or
                              biggest <= _MAX_CANCELLATION * abs(value))
    return value, ok


def watterson_likelihood(s, theta, n_seq=DEFAULT_N_SEQ, return_flags=False):
    """Exact P(S = s | theta, n_seq).

    ``theta`` may be an array. The alternating closed form is summed with
    compensated summation; values that fail the cancellation check are
    recomputed by geometric convolution. With ``return_flags=True`` a
    boolean array marking those fallbacks is returned as well.
    """
    s = int(s)
    if s < 0:
        raise ValueError("S must be non-negative")
    if int(n_seq) < 2:
        raise ValueError("n_seq must be >= 2")
    n_seq = int(n_seq)
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.any(~(th > 0)):
        raise ValueError("theta must be > 0")
    out = np.empty(th.shape)
    flags = np.zeros(th.shape, dtype=bool)
    for j, t in enumerate(th.ravel()):
        value, ok = _alternating(s, t, n_seq)
        if not ok:
            flags.flat[j] = True
            value = float(segsites_pmf_convolution(s, t, n_seq)[0, s])
        out.flat[j] = min(max(value, 0.0), 1.0)
    if flags.any():
        log.debug("Watterson likelihood fell back to convolution at %d theta values",
                  int(flags.sum()))
    if np.ndim(theta) == 0:
        out, flags = float(out[0]), bool(flags[0])
    return (out, flags) if return_flags else out


# --------------------------------------------------------------------------
# analytic posterior and L1
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AnalyticPosterior(DensityCurve):
    S_obs: int = 0
    prior: Prior = None
    n_seq: int = DEFAULT_N_SEQ


def posterior_grid(prior, n_points=1024):
    """Grid over the prior's hull with exact nodes at every support border."""
    return support_grid(prior.components[0].intervals, n_points)


def analytic_posterior(S_obs, prior, n_seq=DEFAULT_N_SEQ, grid=None, likelihood=None):
    """Posterior proportional to likelihood times prior, trapezoid-normalized.

    ``likelihood(s, theta)`` defaults to the Watterson likelihood.
    """
    if prior.dim != 1:
        raise ValueError("analytic posterior needs a one-dimensional prior")
    grid = posterior_grid(prior) if grid is None else np.asarray(grid, dtype=float)
    lo, hi = prior.domain.lows[0], prior.domain.highs[0]
    if grid[0] > lo or grid[-1] < hi:
        raise ValueError("grid must cover the prior support")
    pri = prior.density(grid[:, None])
    lik = np.zeros(grid.shape)
    pos = grid > 0
    if likelihood is None:
        lik[pos] = watterson_likelihood(S_obs, grid[pos], n_seq)
    else:
        lik[pos] = likelihood(S_obs, grid[pos])
    values = lik * pri
    if not trapezoid(values, grid) > 0:
        raise DegenerateError(f"likelihood of S_obs={S_obs} vanishes on the whole grid")
    support = prior.components[0].intervals
    base = DensityCurve.from_values(grid, values, support)
    return AnalyticPosterior(base.grid, base.density, base.support, (), {}, int(S_obs), prior,
                             int(n_seq))


def prior_curve(prior, grid=None):
    grid = posterior_grid(prior) if grid is None else np.asarray(grid, dtype=float)
    return DensityCurve.from_values(grid, prior.density(grid[:, None]),
                                    prior.components[0].intervals)


def l1_distance(f, g):
    """Trapezoidal integral of |f - g| over the union of both grids."""
    if f.grid.shape == g.grid.shape and np.array_equal(f.grid, g.grid):
        return trapezoid(np.abs(f.density - g.density), f.grid)
    grid = np.union1d(f.grid, g.grid)
    return trapezoid(np.abs(f(grid) - g(grid)), grid)


# --------------------------------------------------------------------------
# comparison harness
# --------------------------------------------------------------------------

METHODS = ("rejection", "reg", "glm")


@dataclass
class ComparisonConfig:
    prior: list = field(default_factory=lambda: list(UNIFORM_PRIOR))
    S_obs_list: list = field(default_factory=lambda: [5, 10, 16, 23, 30])
    epsilon_list: list = field(default_factory=lambda: [1, 2, 5, 10, 20])
    n_seq: int = DEFAULT_N_SEQ
    N_retained: int = 5000
    replicates: int = 25
    seed: int = 0
    max_proposals: int = 10_000_000
    grid_points: int = 512
    kde_multipliers: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    glm_scales: list = field(default_factory=lambda: [25.0, 50.0, 100.0, 200.0])
    # mirror the GLM's smoothing peaks at the hull, as the KDEs are mirrored
    glm_reflect: bool = True
    workers: int = 1

    def __post_init__(self):
        for name in ("S_obs_list", "epsilon_list", "kde_multipliers", "glm_scales"):
            if not list(getattr(self, name)):
                raise ValueError(f"{name} must be non-empty")
        if any(int(s) != s or s < 0 for s in self.S_obs_list):
            raise ValueError("S_obs_list entries must be non-negative integers")
        if any(not e > 0 for e in self.epsilon_list):
            raise ValueError("epsilon_list entries must be > 0")
        if self.N_retained < 3 or self.replicates < 1 or self.n_seq < 2:
            raise ValueError("need N_retained >= 3, replicates >= 1, n_seq >= 2")
        if any(not m > 0 for m in self.kde_multipliers) or any(
                not s > 0 for s in self.glm_scales):
            raise ValueError("bandwidth multipliers and GLM scales must be > 0")


@dataclass(frozen=True)
class ReplicateRecord:
    """L1 distances of one replicate, one entry per candidate setting."""

    cell: int
    replicate: int
    S_obs: int
    epsilon: float
    l1: dict
    argmax: dict
    gap_mass: dict
    proposals: int
    complete: bool


def _candidate_curves(table, prior, grid, cfg):
    """Every method/setting curve for one reference table, keyed (method, setting)."""
    theta = table.params[:, 0]
    support = prior.components[0].intervals
    lo, hi = prior.domain.lows[0], prior.domain.highs[0]
    curves = {}
    for mult in cfg.kde_multipliers:
        curves[("rejection", mult)] = kde_posterior(theta, support, grid=grid,
                                                    bw_multiplier=mult)
    try:
        adjusted = reg_adjust(table, transform=[(lo, hi)])
    except RankDeficiencyError:
        # constant statistics (e.g. eps = 1 on integer S): nothing to regress on
        adjusted = theta[:, None]
    for mult in cfg.kde_multipliers:
        curves[("reg", mult)] = kde_posterior(adjusted[:, 0], ((lo, hi),), grid=grid,
                                              bw_multiplier=mult)
    fit = fit_glm(table)
    for scale in cfg.glm_scales:
        smoothing = choose_smoothing(table, prior.domain, scale)
        mix = build_posterior(fit, smoothing, table, domain=prior.domain,
                              reflect=cfg.glm_reflect)
        curves[("glm", scale)] = marginal_posterior(mix, 0, grid)
    return curves


def _gap_mass(curve, support):
    return sum(curve.mass(a[1], b[0]) for a, b in zip(support, support[1:]))


def _replicate_table(cfg, prior, model, cell, rep, S_obs, eps):
    key = derive_key(cfg.seed, cell, rep)
    mode = FixedEpsilon(float(eps), cfg.N_retained, cfg.max_proposals)
    return run_rejection(model, prior, [float(S_obs)], DistanceSpec(), mode, key=key)


def _run_replicate(cfg, prior, model, cell, rep, S_obs, eps, truth, grid):
    try:
        table = _replicate_table(cfg, prior, model, cell, rep, S_obs, eps)
    except EmptyTableError as exc:
        return ReplicateRecord(cell, rep, S_obs, eps, {}, {}, {}, exc.proposals, False)
    complete = table.n >= cfg.N_retained
    if table.n < 3:
        return ReplicateRecord(cell, rep, S_obs, eps, {}, {}, {}, table.total_proposals, False)
    curves = _candidate_curves(table, prior, grid, cfg)
    support = prior.components[0].intervals
    l1 = {k: l1_distance(c, truth) for k, c in curves.items()}
    argmax = {k: c.argmax() for k, c in curves.items()}
    gap = {k: _gap_mass(c, support) for k, c in curves.items()}
    return ReplicateRecord(cell, rep, S_obs, eps, l1, argmax, gap, table.total_proposals,
                           complete)


@dataclass
class CellResult:
    method: str
    S_obs: int
    epsilon: float
    mean_L1: float
    stderr_L1: float
    worse_than_prior: bool
    prior_L1: float
    complete: bool


@dataclass
class ComparisonResult:
    cells: list
    best_setting: dict
    grand_mean: dict
    candidate_grand_means: dict
    replicates: list
    prior_L1: dict
    config: ComparisonConfig

    def cell(self, method, S_obs, epsilon):
        for c in self.cells:
            if c.method == method and c.S_obs == S_obs and c.epsilon == epsilon:
                return c
        raise KeyError((method, S_obs, epsilon))

    def records(self, S_obs, epsilon):
        return [r for r in self.replicates if r.S_obs == S_obs and r.epsilon == epsilon]


def run_comparison_grid(config=None, **overrides):
    """Rejection, ABC-REG and ABC-GLM posteriors against the analytic one.

    Every (S_obs, epsilon) cell runs ``replicates`` independent fixed-epsilon
    rejection runs keyed by (seed, cell, replicate). Each method is scored
    for every candidate smoothing setting; the setting with the lowest
    grand-mean L1 over the whole grid is reported per method.
    """
    cfg = config if config is not None else ComparisonConfig()
    if overrides:
        cfg = ComparisonConfig(**{**cfg.__dict__, **overrides})
    prior = Prior.from_spec(cfg.prior)
    if prior.dim != 1:
        raise ValueError("the comparison harness needs a one-dimensional prior")
    model = CoalescentToyModel(cfg.n_seq)
    grid = posterior_grid(prior, cfg.grid_points)
    flat = prior_curve(prior, grid)
    truths = {s: analytic_posterior(s, prior, cfg.n_seq, grid) for s in cfg.S_obs_list}
    prior_l1 = {s: l1_distance(flat, t) for s, t in truths.items()}

    jobs = []
    cell = 0
    for S_obs in cfg.S_obs_list:
        for eps in cfg.epsilon_list:
            jobs += [(cell, rep, S_obs, eps) for rep in range(cfg.replicates)]
            cell += 1

    def work(job):
        c, rep, S_obs, eps = job
        return _run_replicate(cfg, prior, model, c, rep, S_obs, eps, truths[S_obs], grid)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(work, jobs))
    else:
        records = [work(j) for j in jobs]

    settings = {"rejection": cfg.kde_multipliers, "reg": cfg.kde_multipliers,
                "glm": cfg.glm_scales}
    scored = [r for r in records if r.l1]
    cand = {}
    for method, values in settings.items():
        for v in values:
            cand[(method, v)] = float(np.mean([r.l1[(method, v)] for r in scored])) \
                if scored else float("nan")
    best = {m: min(settings[m], key=lambda v: cand[(m, v)]) for m in METHODS}

    cells = []
    for S_obs in cfg.S_obs_list:
        for eps in cfg.epsilon_list:
            recs = [r for r in records if r.S_obs == S_obs and r.epsilon == eps]
            ok = [r for r in recs if r.l1]
            complete = all(r.complete for r in recs)
            for m in METHODS:
                vals = np.array([r.l1[(m, best[m])] for r in ok])
                mean = float(vals.mean()) if vals.size else float("nan")
                se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
                cells.append(CellResult(m, S_obs, eps, mean, se, bool(mean > prior_l1[S_obs]),
                                        prior_l1[S_obs], complete))
    grand = {m: float(np.mean([c.mean_L1 for c in cells if c.method == m])) for m in METHODS}
    return ComparisonResult(cells, best, grand, cand, records, prior_l1, cfg)


def cell_curves(result, S_obs, epsilon, replicate=0):
    """Analytic and estimated curves of one replicate, each method at its chosen setting.

    Re-runs the replicate from its (seed, cell, replicate) key, so the
    curves are exactly the ones scored in ``result``.
    """
    cfg = result.config
    cell = cfg.S_obs_list.index(S_obs) * len(cfg.epsilon_list) + cfg.epsilon_list.index(epsilon)
    prior = Prior.from_spec(cfg.prior)
    grid = posterior_grid(prior, cfg.grid_points)
    table = _replicate_table(cfg, prior, CoalescentToyModel(cfg.n_seq), cell, replicate,
                             S_obs, epsilon)
    curves = _candidate_curves(table, prior, grid, cfg)
    out = {"analytic": analytic_posterior(S_obs, prior, cfg.n_seq, grid)}
    out.update({m: curves[(m, result.best_setting[m])] for m in METHODS})
    return out


__all__ = ["CoalescentToyModel", "PoissonToyModel", "AnalyticPosterior", "ComparisonConfig",
           "ComparisonResult", "CellResult", "simulate_S", "watterson_likelihood",
           "segsites_pmf_convolution", "analytic_posterior", "prior_curve", "posterior_grid",
           "l1_distance", "run_comparison_grid", "cell_curves", "harmonic", "UNIFORM_PRIOR", "GAP_PRIOR"]
