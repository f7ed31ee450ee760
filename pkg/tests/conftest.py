import numpy as np
import pytest

from abcglm import DistanceSpec, ParameterDomain, ReferenceTable


def make_table(params, stats, s_obs, epsilon=None, total=None):
    """Reference table around arbitrary data; epsilon defaults to just above the max distance."""
    params = np.asarray(params, dtype=float)
    stats = np.asarray(stats, dtype=float)
    if params.ndim == 1:
        params = params[:, None]
    if stats.ndim == 1:
        stats = stats[:, None]
    s_obs = np.atleast_1d(np.asarray(s_obs, dtype=float))
    d = DistanceSpec().distances(stats, s_obs)
    eps = float(d.max()) * 1.001 + 1e-9 if epsilon is None else epsilon
    return ReferenceTable(params, stats, total or 2 * len(params), eps, s_obs)


def linear_table(rng, N=50, C=1.3, c0=0.4, noise=0.5, lo=0.0, hi=10.0, s_obs=None):
    """1-D table from s = C theta + c0 + noise on theta ~ U(lo, hi)."""
    theta = rng.uniform(lo, hi, N)
    s = C * theta + c0 + noise * rng.standard_normal(N)
    s_obs = C * 0.5 * (lo + hi) + c0 if s_obs is None else s_obs
    return make_table(theta, s, s_obs), ParameterDomain.box([lo], [hi])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
