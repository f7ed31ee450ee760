import numpy as np
import pytest
from scipy import integrate, stats

from abcglm import (CoalescentToyModel, DegenerateError, DistanceSpec, IdentityModel,
                    MarginalDensityEstimate, PoissonToyModel, Prior, Uniform, bayes_factor,
                    choose_smoothing, estimate_acceptance_rate, fit_glm, model_marginal_density,
                    stability_sweep)
from abcglm.glm import glm_likelihood, regularized_sigma, truncated_prior_density

from conftest import linear_table, make_table

UNIT = Prior([Uniform(0.0, 1.0)])


def est(log_value, degenerate=False):
    return MarginalDensityEstimate(log_value, 0.1, 0.0, 100, degenerate)


def test_identity_acceptance_rate():
    a = estimate_acceptance_rate(IdentityModel(), UNIT, [0.5], DistanceSpec(), 0.1, 200_000,
                                 seed=3)
    assert abs(a.rate - 0.2) < 3 * np.sqrt(0.2 * 0.8 / 200_000)
    assert a.stderr == pytest.approx(np.sqrt(a.rate * (1 - a.rate) / 200_000))


def test_wide_tolerance_accepts_everything():
    a = estimate_acceptance_rate(IdentityModel(), UNIT, [0.5], DistanceSpec(), 1.0, 5000)
    assert a.rate == 1.0 and a.stderr == 0.0


def test_acceptance_rate_is_reproducible_across_workers():
    args = (CoalescentToyModel(), Prior([Uniform(0.005, 10)]), [16.0], DistanceSpec(), 5.0,
            60_000)
    one = estimate_acceptance_rate(*args, seed=8)
    many = estimate_acceptance_rate(*args, seed=8, workers=4, chunk_size=7000)
    assert one.rate == many.rate and one.accepted == many.accepted
    assert estimate_acceptance_rate(*args, seed=9).accepted != one.accepted


def test_nothing_accepted_is_degenerate():
    a = estimate_acceptance_rate(IdentityModel(), UNIT, [5.0], DistanceSpec(), 0.1, 1000)
    assert a.degenerate and a.rate == 0.0
    t = make_table([0.2, 0.4, 0.9], [0.1, 0.5, 0.8], [0.5])
    f = model_marginal_density(fit_glm(t), choose_smoothing(t, UNIT.domain), t,
                               acceptance_rate=0.0)
    assert f.degenerate and f.log_value == -np.inf


def _quadrature_marginal(table, fit, smoothing):
    # the smoothed prior is a sum of untruncated Gaussian peaks, so it lives
    # on the whole line; 12 sigma past the outermost peak is far enough
    reach = 12 * smoothing.sigmas[0]
    lo, hi = table.params.min() - reach, table.params.max() + reach
    sigma = regularized_sigma(fit)[0]

    def integrand(t):
        return (glm_likelihood(fit, table.s_obs, [[t]], sigma)[0]
                * truncated_prior_density(table, smoothing, [[t]])[0])

    pts = np.sort(table.params[:, 0])
    value, _ = integrate.quad(integrand, lo, hi, points=pts, limit=1000, epsabs=0,
                              epsrel=1e-10)
    return table.acceptance_rate * value


@pytest.mark.parametrize("seed", range(10))
def test_marginal_density_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    C = rng.uniform(0.3, 3.0)
    noise = rng.uniform(0.2, 2.0)
    table, dom = linear_table(rng, N=50, C=C, c0=rng.normal(), noise=noise,
                              s_obs=rng.uniform(2, 8) * C)
    fit = fit_glm(table)
    smoothing = choose_smoothing(table, dom)
    f = model_marginal_density(fit, smoothing, table)
    oracle = _quadrature_marginal(table, fit, smoothing)
    assert f.value == pytest.approx(oracle, rel=1e-4)


def test_zero_slope_gives_a_single_gaussian():
    theta = np.repeat(np.linspace(0.05, 0.95, 20), 2)
    s = np.tile([-1.0, 1.0], 20) * 0.3 + 2.0
    t = make_table(theta, s, [2.4])
    fit = fit_glm(t)
    assert abs(fit.C[0, 0]) < 1e-12
    f = model_marginal_density(fit, choose_smoothing(t, UNIT.domain), t)
    expected = t.acceptance_rate * stats.norm.pdf(2.4, fit.c0[0], np.sqrt(fit.Sigma_s[0, 0]))
    assert f.value == pytest.approx(expected, rel=1e-12)


def test_marginal_is_linear_in_the_acceptance_rate(rng):
    t, dom = linear_table(rng)
    fit, sm = fit_glm(t), choose_smoothing(t, dom)
    one = model_marginal_density(fit, sm, t, acceptance_rate=0.01)
    two = model_marginal_density(fit, sm, t, acceptance_rate=0.02)
    assert two.log_value - one.log_value == pytest.approx(np.log(2), abs=1e-14)


def test_marginal_ignores_row_order(rng):
    t, dom = linear_table(rng, N=80)
    perm = rng.permutation(t.n)
    u = make_table(t.params[perm], t.stats[perm], t.s_obs, t.epsilon, t.total_proposals)
    a = model_marginal_density(fit_glm(t), choose_smoothing(t, dom), t)
    b = model_marginal_density(fit_glm(u), choose_smoothing(u, dom), u)
    assert a.log_value == pytest.approx(b.log_value, rel=1e-12)


def test_marginal_is_continuous_in_s_obs(rng):
    t, dom = linear_table(rng)
    fit, sm = fit_glm(t), choose_smoothing(t, dom)
    a = model_marginal_density(fit, sm, t, s_obs=[6.9]).log_value
    b = model_marginal_density(fit, sm, t, s_obs=[6.9 + 1e-8]).log_value
    assert abs(a - b) < 1e-4


def test_bayes_factor_examples():
    same = bayes_factor(est(-3.0), est(-3.0))
    assert same.B_AB == 1.0 and same.posterior_prob_A == 0.5
    big = bayes_factor(est(2.0), est(-10.0))
    assert big.B_AB == pytest.approx(np.exp(12.0), rel=1e-12)
    assert big.B_AB > 1e5 and big.posterior_prob_A > 0.9999
    three = bayes_factor(est(np.log(3.0)), est(0.0), prior_prob_A=0.25)
    assert three.posterior_prob_A == pytest.approx(0.5, rel=1e-14)


def test_bayes_factor_is_antisymmetric(rng):
    for a, b in rng.normal(scale=50, size=(20, 2)):
        ab, ba = bayes_factor(est(a), est(b)), bayes_factor(est(b), est(a))
        assert abs(ab.log_B_AB + ba.log_B_AB) < 1e-12


def test_bayes_factor_degenerate_inputs():
    inf = bayes_factor(est(-2.0), est(-np.inf, True))
    assert inf.infinite and inf.posterior_prob_A == 1.0
    with pytest.raises(DegenerateError):
        bayes_factor(est(-np.inf, True), est(-np.inf, True))
    with pytest.raises(ValueError):
        bayes_factor(est(0.0), est(0.0), prior_prob_A=1.0)


def test_sweep_of_a_model_against_itself_is_flat():
    model = CoalescentToyModel(jitter=True)
    prior = Prior([Uniform(0.005, 10)])
    pts = stability_sweep(model, model, prior, prior, [16.0], [0.01, 0.03, 0.05], 20_000,
                          seed=1)
    assert [p.flag for p in pts] == ["ok"] * 3
    assert all(p.log_bayes_factor == 0.0 for p in pts)
    assert [p.n_retained for p in pts] == [200, 600, 1000]


def test_sweep_flags_tiny_tables_and_validates_rates():
    model = CoalescentToyModel(jitter=True)
    prior = Prior([Uniform(0.005, 10)])
    pts = stability_sweep(model, model, prior, prior, [16.0], [0.0001], 10_000)
    assert pts[0].flag == "unreliable" and np.isnan(pts[0].log_bayes_factor)
    with pytest.raises(ValueError):
        stability_sweep(model, model, prior, prior, [16.0], [1.5], 10_000)


def test_sweep_is_deterministic_across_workers():
    a = CoalescentToyModel(jitter=True)
    b = PoissonToyModel(jitter=True)
    pa, pb = Prior([Uniform(0.005, 10)]), Prior([Uniform(0.5, 30)])
    kw = dict(acceptance_rates=[0.01, 0.05], budget=20_000, seed=4, independent=True)
    one = stability_sweep(a, b, pa, pb, [16.0], **kw)
    many = stability_sweep(a, b, pa, pb, [16.0], workers=2, **kw)
    assert [p.log_bayes_factor for p in one] == [p.log_bayes_factor for p in many]
