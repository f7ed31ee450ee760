import numpy as np
import pytest

from abcglm import (CoalescentToyModel, DistanceSpec, EmptyTableError, FixedEpsilon,
                    IdentityModel, NotPositiveDefiniteError, Prior, RetainBest, Uniform,
                    distance, fit_pca, run_rejection)
from abcglm.models import LinearGaussianModel
from abcglm.sampler import pilot_covariance, simulate_proposals
from abcglm.rng import derive_key

UNIT = Prior([Uniform(0.0, 1.0)])


def test_euclidean_distance():
    assert distance(DistanceSpec(), [3.0, 4.0], [0.0, 0.0]) == 5.0


def test_mahalanobis_scaling():
    spec = DistanceSpec("mahalanobis", np.diag([4.0, 1.0]))
    assert distance(spec, [2.0, 0.0], [0.0, 0.0]) == pytest.approx(1.0, rel=1e-15)


def test_mahalanobis_rejects_non_spd():
    with pytest.raises(NotPositiveDefiniteError):
        DistanceSpec("mahalanobis", np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotPositiveDefiniteError):
        DistanceSpec("mahalanobis", np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_distance_dimension_mismatch():
    with pytest.raises(ValueError):
        distance(DistanceSpec(), [1.0, 2.0], [1.0])


def test_identity_acceptance_rate():
    table = run_rejection(IdentityModel(), UNIT, [0.5], DistanceSpec(),
                          FixedEpsilon(0.1, max_proposals=100_000), seed=1)
    assert table.total_proposals == 100_000
    se = np.sqrt(0.2 * 0.8 / 1e5)
    assert abs(table.acceptance_rate - 0.2) < 3 * se
    assert np.all(np.abs(table.params[:, 0] - 0.5) < 0.1)


def test_retain_best_keeps_the_closest():
    mode = RetainBest(100, 10_000)
    table = run_rejection(IdentityModel(), UNIT, [0.5], DistanceSpec(), mode, seed=2)
    thetas, stats = simulate_proposals(IdentityModel(), UNIT, derive_key(2), 0, 10_000)
    d = np.abs(stats[:, 0] - 0.5)
    assert table.n == 100 and table.total_proposals == 10_000
    assert table.epsilon == pytest.approx(np.sort(d)[99], rel=0, abs=0)
    assert set(table.params[:, 0]) == set(thetas[np.argsort(d)[:100], 0])


def test_toy_fixed_epsilon_target():
    table = run_rejection(CoalescentToyModel(10), Prior([Uniform(0.005, 10)]), [16.0],
                          DistanceSpec(), FixedEpsilon(10.0, 5000), seed=3)
    assert table.n == 5000
    assert np.all(np.abs(table.stats[:, 0] - 16) < 10)
    assert table.acceptance_rate == 5000 / table.total_proposals


def test_empty_table_error_carries_count():
    with pytest.raises(EmptyTableError) as info:
        run_rejection(IdentityModel(), UNIT, [5.0], DistanceSpec(),
                      FixedEpsilon(0.1, max_proposals=1000), seed=0)
    assert info.value.proposals == 1000


def test_proposal_cap_without_target_is_partial():
    table = run_rejection(IdentityModel(), UNIT, [0.5], DistanceSpec(),
                          FixedEpsilon(0.1, 10**9, max_proposals=2000), seed=0)
    assert table.total_proposals == 2000
    assert table.metadata["reached_target"] is False


@pytest.mark.parametrize("mode", [FixedEpsilon(0.05, 700), RetainBest(300, 50_000)])
def test_worker_count_and_chunking_do_not_change_results(mode):
    model = LinearGaussianModel([[1.0], [0.5]], [0.0, 1.0], [0.1, 0.2])
    runs = [run_rejection(model, UNIT, [0.3, 1.1], DistanceSpec(), mode, seed=6,
                          workers=w, chunk_size=c) for w, c in ((1, 1 << 15), (4, 1000),
                                                                 (3, 777))]
    for other in runs[1:]:
        assert np.array_equal(runs[0].params, other.params)
        assert np.array_equal(runs[0].stats, other.stats)
        assert runs[0].total_proposals == other.total_proposals
        assert runs[0].epsilon == other.epsilon


def test_nested_tolerances_give_nested_sets():
    model = CoalescentToyModel(10)
    prior = Prior([Uniform(0.005, 10)])
    mode = lambda e: FixedEpsilon(e, max_proposals=20_000)  # noqa: E731
    small = run_rejection(model, prior, [16.0], DistanceSpec(), mode(2.0), seed=4)
    large = run_rejection(model, prior, [16.0], DistanceSpec(), mode(5.0), seed=4)
    assert set(map(tuple, small.params)) <= set(map(tuple, large.params))
    assert small.n < large.n


def test_pca_diagonal_sample_gives_axis_basis(rng):
    x = rng.standard_normal((5000, 3)) * np.array([1.0, 3.0, 0.5])
    x = x - x.mean(axis=0)
    # make the sample covariance exactly diagonal
    q, _ = np.linalg.qr(x)
    x = q * np.sqrt(x.shape[0] - 1) * np.array([1.0, 3.0, 0.5])
    pca = fit_pca(x, k=3)
    assert np.allclose(np.sort(np.abs(pca.basis), axis=1)[:, -1], 1.0, atol=1e-8)
    assert np.allclose(pca.eigenvalues, [9.0, 1.0, 0.25], rtol=1e-10)


def test_pca_rank_deficient_reports_effective_k(rng):
    s1 = rng.standard_normal(200)
    pca = fit_pca(np.column_stack([s1, 2 * s1]), k=2)
    assert pca.k == 1
    assert pca.spectrum[1] == 0.0
    assert pca.retained_variance_fraction == pytest.approx(1.0)


def test_pca_projection_covariance_is_diagonal(rng):
    x = rng.standard_normal((3000, 4)) @ rng.standard_normal((4, 4))
    pca = fit_pca(x, k=4)
    cov = np.cov(pca.project(x), rowvar=False)
    np.testing.assert_allclose(cov, np.diag(pca.eigenvalues), rtol=1e-8,
                               atol=1e-8 * pca.eigenvalues[0])
    np.testing.assert_allclose(pca.basis @ pca.basis.T, np.eye(4), atol=1e-10)


def test_whitened_euclidean_equals_mahalanobis(rng):
    x = rng.standard_normal((2000, 3)) @ rng.standard_normal((3, 3))
    pca = fit_pca(x, k=3)
    spec = DistanceSpec("mahalanobis", np.cov(x, rowvar=False))
    a, b = x[:100], x[100:200]
    d_white = np.linalg.norm(pca.project(a, True) - pca.project(b, True), axis=1)
    d_maha = [distance(spec, u, v) for u, v in zip(a, b)]
    np.testing.assert_allclose(d_white, d_maha, rtol=1e-8)


def test_pca_default_keeps_95_percent(rng):
    x = rng.standard_normal((4000, 3)) * np.array([10.0, 1.0, 0.1])
    pca = fit_pca(x)
    assert pca.k == 1 and pca.retained_variance_fraction >= 0.95


def test_pca_transform_in_rejection(rng):
    model = LinearGaussianModel([[1.0], [1.0]], [0.0, 0.0], [0.05, 0.05])
    pca = fit_pca(simulate_proposals(model, UNIT, derive_key(99), 0, 2000)[1], k=1)
    table = run_rejection(model, UNIT, [0.5, 0.5], DistanceSpec(), FixedEpsilon(0.05, 200),
                          seed=1, transform=pca)
    assert table.n_stats == 1
    assert "pca" in table.metadata


def test_pilot_covariance_matches_model_noise():
    model = LinearGaussianModel([[0.0], [0.0]], [0.0, 0.0], [2.0, 0.5])
    cov = pilot_covariance(model, UNIT, n=20_000, seed=1)
    np.testing.assert_allclose(np.diag(cov), [4.0, 0.25], rtol=0.05)
