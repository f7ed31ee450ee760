import numpy as np
import pytest
from scipy import integrate, stats

from abcglm import (CoalescentToyModel, DegenerateError, DensityCurve, PoissonToyModel, Prior,
                    RandomStream, Uniform, UniformUnion, analytic_posterior, derive_key,
                    l1_distance, simulate_S, watterson_likelihood)
from abcglm.rng import PURPOSE_MODEL
from abcglm.toymodel import (ComparisonConfig, cell_curves, harmonic, posterior_grid,
                             run_comparison_grid, segsites_pmf_convolution)

FLAT = Prior([Uniform(0.005, 10.0)])
GAP = Prior([UniformUnion([(0.005, 3.0), (6.0, 10.0)])])


def draws(theta, n_seq, n, seed=0):
    model = CoalescentToyModel(n_seq)
    return model.simulate_batch(np.full((n, 1), float(theta)), derive_key(seed),
                                np.arange(n))[:, 0].astype(int)


def test_simulate_s_single_draw_matches_batch():
    key = derive_key(4)
    s = simulate_S(3.0, 10, RandomStream(key, 17, PURPOSE_MODEL))
    batch = CoalescentToyModel(10).simulate_batch([[3.0]], key, [17])
    assert isinstance(s, int) and s == batch[0, 0]
    with pytest.raises(ValueError):
        simulate_S(0.0, 10, RandomStream(key, 0, PURPOSE_MODEL))


def test_two_sequence_mean():
    s = draws(2.0, 2, 100_000, seed=1)
    assert harmonic(2) == 1.0
    assert abs(s.mean() - 2.0) < 3 * s.std(ddof=1) / np.sqrt(s.size)


def test_two_sequence_geometric_law():
    theta = 2.0
    s = draws(theta, 2, 100_000, seed=2)
    k_max = 12
    observed = np.array([np.count_nonzero(s == k) for k in range(k_max)]
                        + [np.count_nonzero(s >= k_max)])
    p = theta ** np.arange(k_max) / (1 + theta) ** (np.arange(k_max) + 1)
    expected = s.size * np.append(p, 1 - p.sum())
    assert stats.chisquare(observed, expected).pvalue > 0.001


def test_tiny_theta_gives_no_mutations():
    assert np.all(draws(1e-9, 10, 10_000, seed=3) == 0)


def test_mean_is_theta_times_harmonic():
    s = draws(4.0, 20, 100_000, seed=5)
    assert abs(s.mean() - 4.0 * harmonic(20)) < 4 * s.std(ddof=1) / np.sqrt(s.size)


def test_watterson_two_sequences_closed_form():
    assert watterson_likelihood(0, 1.0, 2) == pytest.approx(0.5, rel=1e-15)
    theta = np.array([0.3, 2.0, 9.0])
    for k in (0, 3, 11):
        np.testing.assert_allclose(watterson_likelihood(k, theta, 2),
                                   theta ** k / (1 + theta) ** (k + 1), rtol=1e-13)


@pytest.mark.parametrize("n_seq", [10, 20])
@pytest.mark.parametrize("theta", [0.1, 1.0, 10.0])
def test_watterson_sums_to_one(theta, n_seq):
    # the tail beyond 400 is far below 1e-8 for theta <= 10
    total = sum(watterson_likelihood(s, theta, n_seq) for s in range(400))
    assert total == pytest.approx(1.0, abs=1e-8)


def test_watterson_matches_convolution():
    theta = np.array([0.05, 0.7, 3.0, 9.5])
    pmf = segsites_pmf_convolution(40, theta, 10)
    for s in (0, 1, 7, 16, 40):
        np.testing.assert_allclose(watterson_likelihood(s, theta, 10), pmf[:, s], rtol=1e-9,
                                   atol=1e-300)


def test_watterson_flags_cancellation():
    # large theta and small S: the alternating terms are huge next to the result
    value, flag = watterson_likelihood(0, 10.0, 20, return_flags=True)
    assert flag
    assert value == pytest.approx(segsites_pmf_convolution(0, 10.0, 20)[0, 0], rel=1e-12)
    _, calm = watterson_likelihood(3, 2.0, 10, return_flags=True)
    assert not calm


def test_watterson_rejects_bad_input():
    for args in ((-1, 1.0, 10), (2, 0.0, 10), (2, 1.0, 1)):
        with pytest.raises(ValueError):
            watterson_likelihood(*args)


def test_simulator_matches_likelihood():
    s = draws(5.0, 10, 1_000_000, seed=7)
    counts = np.bincount(s)
    n = s.size
    checked = 0
    for k in range(counts.size):
        p = watterson_likelihood(k, 5.0, 10)
        if p > 1e-3:
            assert abs(counts[k] / n - p) < 4 * np.sqrt(p * (1 - p) / n), k
            checked += 1
    assert checked > 20


def test_poisson_model_likelihood():
    model = PoissonToyModel()
    lam = np.array([0.5, 4.0, 30.0])
    np.testing.assert_allclose(model.likelihood(3, lam), stats.poisson.pmf(3, lam), rtol=1e-13)


def test_jittered_statistic_rounds_to_the_count():
    key = derive_key(2)
    plain = CoalescentToyModel(10).simulate_batch(np.full((500, 1), 3.0), key, np.arange(500))
    jit = CoalescentToyModel(10, jitter=True).simulate_batch(np.full((500, 1), 3.0), key,
                                                              np.arange(500))
    assert np.array_equal(np.round(jit), plain)
    assert np.unique(jit).size == 500


def test_flat_prior_posterior_peaks_at_the_likelihood_argmax():
    grid = posterior_grid(FLAT, 2001)
    post = analytic_posterior(16, FLAT, 10, grid)
    lik = watterson_likelihood(16, grid, 10)
    assert post.argmax() == grid[np.argmax(lik)]
    assert post.integral() == pytest.approx(1.0, abs=1e-8)


def test_gap_prior_posterior_vanishes_in_the_gap():
    post = analytic_posterior(16, GAP, 10)
    inside = (post.grid > 3) & (post.grid < 6)
    assert inside.any() and np.all(post.density[inside] == 0.0)
    assert post.integral() == pytest.approx(1.0, abs=1e-8)


def test_posterior_mean_agrees_with_a_finer_grid():
    coarse = analytic_posterior(16, FLAT, 10, posterior_grid(FLAT, 1024))
    lik = lambda t: watterson_likelihood(16, t, 10)  # noqa: E731
    z = integrate.quad(lik, 0.005, 10, epsabs=0, epsrel=1e-12)[0]
    mean = integrate.quad(lambda t: t * lik(t), 0.005, 10, epsabs=0, epsrel=1e-12)[0] / z
    fine = analytic_posterior(16, FLAT, 10, posterior_grid(FLAT, 10240))
    assert coarse.mean() == pytest.approx(fine.mean(), rel=1e-4)
    assert fine.mean() == pytest.approx(mean, rel=1e-4)


def test_doubling_the_grid_changes_little():
    a = analytic_posterior(10, FLAT, 20, posterior_grid(FLAT, 4096))
    b = analytic_posterior(10, FLAT, 20, posterior_grid(FLAT, 8192))
    assert l1_distance(a, b) < 1e-6


def test_vanishing_likelihood_raises():
    prior = Prior([Uniform(0.005, 0.01)])
    with pytest.raises(DegenerateError):
        analytic_posterior(400, prior, 10)


def test_grid_must_cover_the_prior():
    with pytest.raises(ValueError):
        analytic_posterior(5, FLAT, 10, np.linspace(1, 10, 50))


def _box(lo, hi, grid):
    return DensityCurve.from_values(grid, ((grid >= lo) & (grid <= hi)).astype(float))


def test_l1_examples():
    grid = np.linspace(-1, 3, 40_001)
    f, g = _box(0, 1, grid), _box(0.5, 1.5, grid)
    assert l1_distance(f, f) == 0.0
    assert l1_distance(f, g) == pytest.approx(1.0, abs=1e-3)
    assert l1_distance(_box(-1, 0.4, grid), _box(0.6, 2, grid)) == pytest.approx(2.0, abs=1e-6)


def test_l1_on_different_grids():
    x = np.linspace(-8, 8, 801)
    y = np.linspace(-8, 8, 1201)
    f = DensityCurve.from_values(x, stats.norm.pdf(x))
    g = DensityCurve.from_values(y, stats.norm.pdf(y, 1.0))
    exact = 2 * (2 * stats.norm.cdf(0.5) - 1)
    assert l1_distance(f, g) == pytest.approx(exact, rel=1e-3)


def test_comparison_grid_small_run():
    cfg = ComparisonConfig(S_obs_list=[5, 16], epsilon_list=[2, 10], N_retained=300,
                           replicates=2, seed=3, grid_points=256, glm_scales=[50.0])
    res = run_comparison_grid(cfg)
    assert len(res.cells) == 12
    assert set(res.best_setting) == {"rejection", "reg", "glm"}
    for c in res.cells:
        assert 0 <= c.mean_L1 <= 2 and c.complete
    again = run_comparison_grid(cfg, workers=3)
    assert [c.mean_L1 for c in again.cells] == [c.mean_L1 for c in res.cells]
    curves = cell_curves(res, 16, 10, replicate=1)
    rec = [r for r in res.records(16, 10) if r.replicate == 1][0]
    assert l1_distance(curves["glm"], curves["analytic"]) == rec.l1[("glm", 50.0)]


def test_comparison_cell_marked_incomplete():
    res = run_comparison_grid(S_obs_list=[16], epsilon_list=[1], N_retained=50, replicates=1,
                              max_proposals=100, grid_points=128, glm_scales=[50.0])
    assert not res.cells[0].complete


def test_comparison_config_validation():
    with pytest.raises(ValueError):
        ComparisonConfig(epsilon_list=[])
    with pytest.raises(ValueError):
        ComparisonConfig(S_obs_list=[2.5])
