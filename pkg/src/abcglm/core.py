"""Domain types shared by every stage of the pipeline.

Parameters live in a bounded box (possibly with gaps), priors factor over
dimensions, and a :class:`ReferenceTable` holds what a rejection run kept.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.stats import truncnorm

from .curves import in_support, normalize_intervals
from .errors import ConfigError, NotPositiveDefiniteError
from .rng import PURPOSE_MODEL, PURPOSE_PRIOR, RandomStream
from . import kernels


# --------------------------------------------------------------------------
# parameter domain and priors
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterDomain:
    """Per-dimension supports; each is a sorted tuple of disjoint intervals."""

    supports: tuple

    def __post_init__(self):
        supports = tuple(normalize_intervals(s) for s in self.supports)
        if not supports:
            raise ValueError("domain needs at least one dimension")
        for s in supports:
            if not (np.isfinite(s[0][0]) and np.isfinite(s[-1][1])):
                raise ValueError("parameter supports must be bounded")
        object.__setattr__(self, "supports", supports)

    @classmethod
    def box(cls, lows, highs):
        return cls(tuple(((lo, hi),) for lo, hi in zip(lows, highs)))

    @property
    def dim(self):
        return len(self.supports)

    @property
    def lows(self):
        return np.array([s[0][0] for s in self.supports])

    @property
    def highs(self):
        return np.array([s[-1][1] for s in self.supports])

    @property
    def lengths(self):
        """Length of each dimension's outer bounding interval."""
        return self.highs - self.lows

    def contains(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        ok = np.ones(theta.shape[0], dtype=bool)
        for k, s in enumerate(self.supports):
            ok &= in_support(theta[:, k], s)
        return ok

    def in_hull(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        return np.all((theta >= self.lows) & (theta <= self.highs), axis=1)

    def normalize(self, theta):
        return (np.asarray(theta, dtype=float) - self.lows) / self.lengths

    def denormalize(self, unit):
        return self.lows + np.asarray(unit, dtype=float) * self.lengths


def normalize_parameters(domain, theta):
    """Affine map of ``theta`` onto the unit cube of the domain's hull."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != domain.dim:
        raise ValueError(f"theta has dimension {theta.shape[-1]}, domain has {domain.dim}")
    return domain.normalize(theta)


def denormalize_parameters(domain, unit):
    return domain.denormalize(unit)


class Uniform:
    kind = "uniform"

    def __init__(self, low, high):
        if not float(high) > float(low):
            raise ValueError(f"uniform prior needs low < high, got [{low}, {high}]")
        self.low, self.high = float(low), float(high)
        self.intervals = ((self.low, self.high),)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.low) & (x <= self.high), 1.0 / (self.high - self.low), 0.0)

    def ppf(self, u):
        return self.low + (self.high - self.low) * np.asarray(u, dtype=float)

    def to_spec(self):
        return {"uniform": [self.low, self.high]}


class UniformUnion:
    """Uniform over a finite union of disjoint intervals."""

    kind = "union"

    def __init__(self, intervals):
        self.intervals = normalize_intervals(intervals)
        lengths = np.array([hi - lo for lo, hi in self.intervals])
        self.total = float(lengths.sum())
        self._starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])

    def pdf(self, x):
        return np.where(in_support(x, self.intervals), 1.0 / self.total, 0.0)

    def ppf(self, u):
        pos = np.asarray(u, dtype=float) * self.total
        idx = np.clip(np.searchsorted(self._starts, pos, side="right") - 1,
                      0, len(self.intervals) - 1)
        lows = np.array([lo for lo, _ in self.intervals])
        highs = np.array([hi for _, hi in self.intervals])
        return np.minimum(lows[idx] + (pos - self._starts[idx]), highs[idx])

    def to_spec(self):
        return {"union": [list(iv) for iv in self.intervals]}


class TruncatedNormal:
    kind = "truncnorm"

    def __init__(self, mean, sd, low, high):
        if not sd > 0:
            raise ValueError("truncated normal needs sd > 0")
        if not float(high) > float(low):
            raise ValueError("truncated normal needs low < high")
        self.mean, self.sd = float(mean), float(sd)
        self.low, self.high = float(low), float(high)
        self.intervals = ((self.low, self.high),)
        self._dist = truncnorm((self.low - self.mean) / self.sd,
                               (self.high - self.mean) / self.sd,
                               loc=self.mean, scale=self.sd)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.low) & (x <= self.high)
        return np.where(inside, self._dist.pdf(np.clip(x, self.low, self.high)), 0.0)

    def ppf(self, u):
        return np.clip(self._dist.ppf(np.asarray(u, dtype=float)), self.low, self.high)

    def to_spec(self):
        return {"truncnorm": {"mean": self.mean, "sd": self.sd,
                              "low": self.low, "high": self.high}}


def component_from_spec(spec):
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError(f"prior component must be a one-key mapping, got {spec!r}")
    (kind, args), = spec.items()
    try:
        if kind == "uniform":
            return Uniform(*args)
        if kind == "union":
            return UniformUnion(args)
        if kind == "truncnorm":
            unknown = set(args) - {"mean", "sd", "low", "high"}
            if unknown:
                raise ConfigError(f"unknown truncnorm keys: {sorted(unknown)}")
            return TruncatedNormal(**args)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad prior component {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown prior component kind {kind!r}")


class Prior:
    """Product of independent one-dimensional components."""

    def __init__(self, components):
        self.components = tuple(components)
        if not self.components:
            raise ValueError("prior needs at least one component")
        self.domain = ParameterDomain(tuple(c.intervals for c in self.components))

    @classmethod
    def from_spec(cls, specs):
        if isinstance(specs, dict):
            specs = [specs]
        return cls([component_from_spec(s) for s in specs])

    def to_spec(self):
        return [c.to_spec() for c in self.components]

    @property
    def dim(self):
        return len(self.components)

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.dim:
            raise ValueError(f"theta has dimension {theta.shape[-1]}, prior has {self.dim}")
        return theta

    def density(self, theta):
        theta = self._check(theta)
        out = np.ones(theta.shape[:-1])
        for k, comp in enumerate(self.components):
            out = out * comp.pdf(theta[..., k])
        return out

    def log_density(self, theta):
        with np.errstate(divide="ignore"):
            return np.log(self.density(theta))

    def from_uniforms(self, u):
        u = np.atleast_2d(u)
        return np.column_stack([c.ppf(u[:, k]) for k, c in enumerate(self.components)])

    def sample(self, stream):
        """One draw, consuming ``dim`` uniforms from ``stream``."""
        return self.from_uniforms(stream.uniforms(self.dim))[0]

    def sample_batch(self, key, indices):
        """Row ``i`` equals ``sample(RandomStream(key, indices[i], PURPOSE_PRIOR))``."""
        u = kernels.uniforms(key, np.asarray(indices, dtype=np.uint64), PURPOSE_PRIOR, self.dim)
        return self.from_uniforms(u)


def prior_density(prior, theta):
    return prior.density(theta)


def prior_sample(prior, stream):
    return prior.sample(stream)


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------

class SimulableModel:
    """Contract for simulators: theta plus a random stream gives a summary vector.

    Subclasses implement :meth:`simulate`; vectorized models also override
    :meth:`simulate_batch`, which must return exactly what row-wise
    ``simulate`` calls on ``RandomStream(key, index, PURPOSE_MODEL)`` would.
    """

    n_params = 1
    n_stats = 1
    domain = None

    def simulate(self, theta, stream):
        raise NotImplementedError

    def simulate_batch(self, thetas, key, indices):
        thetas = np.atleast_2d(thetas)
        out = np.empty((thetas.shape[0], self.n_stats))
        for row, (theta, idx) in enumerate(zip(thetas, indices)):
            out[row] = self.simulate(theta, RandomStream(key, int(idx), PURPOSE_MODEL))
        return out

    def to_spec(self):
        return {"id": type(self).__name__}


# --------------------------------------------------------------------------
# distances
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DistanceSpec:
    """Euclidean, or Mahalanobis with an SPD covariance."""

    kind: str = "euclidean"
    covariance: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "mahalanobis"):
            raise ValueError(f"unknown distance kind {self.kind!r}")
        if self.kind == "mahalanobis":
            if self.covariance is None:
                raise ValueError("mahalanobis distance needs a covariance")
            cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
            if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, rtol=1e-12, atol=0):
                raise NotPositiveDefiniteError("covariance must be a symmetric square matrix")
            try:
                chol = linalg.cholesky(cov, lower=True)
            except linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError("covariance is not positive definite") from exc
            object.__setattr__(self, "covariance", cov)
            object.__setattr__(self, "_chol", chol)

    def distances(self, stats, s_obs):
        diff = np.atleast_2d(np.asarray(stats, dtype=float)) - np.asarray(s_obs, dtype=float)
        if self.kind == "euclidean":
            return np.sqrt(np.sum(diff * diff, axis=1))
        if diff.shape[1] != self._chol.shape[0]:
            raise ValueError("statistic dimension does not match the covariance")
        white = linalg.solve_triangular(self._chol, diff.T, lower=True)
        return np.sqrt(np.sum(white * white, axis=0))

    def to_meta(self):
        meta = {"kind": self.kind}
        if self.kind == "mahalanobis":
            meta["covariance"] = self.covariance.tolist()
        return meta

    @classmethod
    def from_meta(cls, meta):
        cov = meta.get("covariance")
        return cls(meta.get("kind", "euclidean"), None if cov is None else np.asarray(cov))


# --------------------------------------------------------------------------
# reference tables
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReferenceTable:
    """Parameters and statistics retained by a rejection run.

    Rows satisfy ``dist(s, s_obs) < epsilon``; ``inclusive`` tables (from
    retain-best runs, where epsilon is the largest kept distance) use ``<=``.
    """

    params: np.ndarray
    stats: np.ndarray
    total_proposals: int
    epsilon: float
    s_obs: np.ndarray
    distance: DistanceSpec = field(default_factory=DistanceSpec)
    seed: int = None
    inclusive: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float)
        stats = np.asarray(self.stats, dtype=float)
        if params.ndim == 1:
            params = params[:, None]
        if stats.ndim == 1:
            stats = stats[:, None]
        s_obs = np.atleast_1d(np.asarray(self.s_obs, dtype=float))
        n_rows = params.shape[0]
        if n_rows < 1 or stats.shape[0] != n_rows:
            raise ValueError("params and stats need the same number of rows (>= 1)")
        if stats.shape[1] != s_obs.shape[0]:
            raise ValueError("s_obs dimension does not match the statistics")
        if not (np.all(np.isfinite(params)) and np.all(np.isfinite(stats))):
            raise ValueError("reference table entries must be finite")
        if int(self.total_proposals) < n_rows:
            raise ValueError("total_proposals must be at least the number of rows")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        d = self.distance.distances(stats, s_obs)
        bad = ~(d <= self.epsilon) if self.inclusive else ~(d < self.epsilon)
        if np.any(bad):
            row = int(np.flatnonzero(bad)[0])
            raise ValueError(
                f"row {row} violates the epsilon condition: distance {d[row]!r} "
                f"vs epsilon {self.epsilon!r}")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "stats", stats)
        object.__setattr__(self, "s_obs", s_obs)
        object.__setattr__(self, "total_proposals", int(self.total_proposals))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def n(self):
        return self.params.shape[0]

    @property
    def n_params(self):
        return self.params.shape[1]

    @property
    def n_stats(self):
        return self.stats.shape[1]

    @property
    def acceptance_rate(self):
        return self.n / self.total_proposals

    def distances(self):
        return self.distance.distances(self.stats, self.s_obs)


def _fmt(x):
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


def sidecar_path(csv_path):
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".meta.json")


def save_table(table, csv_path, extra=None):
    """Write ``table`` as CSV plus a JSON sidecar; returns the sidecar path."""
    csv_path = Path(csv_path)
    header = [f"theta_{k + 1}" for k in range(table.n_params)]
    header += [f"s_{k + 1}" for k in range(table.n_stats)]
    lines = [",".join(header)]
    for p, s in zip(table.params, table.stats):
        lines.append(",".join(_fmt(v) for v in np.concatenate([p, s])))
    csv_path.write_text("\n".join(lines) + "\n")
    meta = {
        "N": table.n,
        "total_proposals": table.total_proposals,
        "epsilon": table.epsilon,
        "s_obs": table.s_obs.tolist(),
        "distance_kind": table.distance.kind,
        "distance": table.distance.to_meta(),
        "seed": table.seed,
        "inclusive": table.inclusive,
        "metadata": dict(table.metadata, **(extra or {})),
    }
    side = sidecar_path(csv_path)
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


def read_table_csv(csv_path):
    """(params, stats) arrays from a reference-table CSV."""
    csv_path = Path(csv_path)
    with csv_path.open() as fh:
        header = fh.readline().strip().split(",")
    m = sum(1 for h in header if h.startswith("theta_"))
    n = sum(1 for h in header if h.startswith("s_"))
    if m < 1 or n < 1 or m + n != len(header) or any(
            h != f"theta_{k + 1}" for k, h in enumerate(header[:m])) or any(
            h != f"s_{k + 1}" for k, h in enumerate(header[m:])):
        raise ConfigError(f"{csv_path}: header must be theta_1..theta_m,s_1..s_n")
    try:
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"{csv_path}: {exc}") from exc
    if data.shape[1] != m + n:
        raise ConfigError(f"{csv_path}: expected {m + n} columns, got {data.shape[1]}")
    return data[:, :m], data[:, m:]


def load_table(csv_path, s_obs=None, sidecar=True):
    """Read a table; without a sidecar, ``s_obs`` is required and the table
    is treated as external (epsilon = largest distance, rate unknown = 1)."""
    csv_path = Path(csv_path)
    params, stats = read_table_csv(csv_path)
    side = sidecar_path(csv_path)
    if sidecar and side.exists():
        meta = json.loads(side.read_text())
        obs = meta["s_obs"] if s_obs is None else s_obs
        dist = DistanceSpec.from_meta(meta.get("distance", {"kind": meta.get("distance_kind", "euclidean")}))
        return ReferenceTable(params, stats, meta["total_proposals"], meta["epsilon"], obs,
                              dist, meta.get("seed"), meta.get("inclusive", False),
                              meta.get("metadata", {}))
    if s_obs is None:
        raise ConfigError(f"{csv_path}: no sidecar found, so s_obs must be given")
    dist = DistanceSpec()
    eps = float(dist.distances(stats, s_obs).max())
    return ReferenceTable(params, stats, params.shape[0], eps, s_obs, dist, None, True,
                          {"external": True})
