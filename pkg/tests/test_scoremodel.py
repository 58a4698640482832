import numpy as np
import pytest
from scipy.stats import multivariate_normal

from ccslab import CfgSpec, GaussianMixtureModel, InputError


def random_mixture(rng, d=3, K=2, full=False, labels=None):
    means = rng.normal(size=(K, d))
    if full:
        covs = np.empty((K, d, d))
        for k in range(K):
            A = rng.normal(size=(d, d))
            covs[k] = A @ A.T + d * np.eye(d)
    else:
        covs = 0.5 + rng.uniform(size=(K, d))
    w = rng.uniform(0.2, 1.0, size=K)
    return GaussianMixtureModel(w / w.sum(), means, covs, labels=labels)


def brute_force_log_density(model, x, abar):
    # Direct summation over component densities via scipy.
    means_t, covs_t = model.marginal_params(abar)
    total = 0.0
    for k in range(model.K):
        cov = np.diag(covs_t[k]) if model.is_diagonal else covs_t[k]
        total += model.weights[k] * multivariate_normal.pdf(x, means_t[k], cov)
    return np.log(total)


# ----------------------------------------------------------------------
# log_density
# ----------------------------------------------------------------------


def test_standard_normal_log_density_invariant():
    d = 5
    model = GaussianMixtureModel.standard(d)
    x = np.linspace(-1, 2, d)
    expected = -0.5 * d * np.log(2 * np.pi) - 0.5 * x @ x
    for abar in (1.0, 0.6, 0.05, 1e-4):
        assert model.log_density(x, abar) == pytest.approx(expected, rel=1e-12)


def test_symmetric_mixture_density_at_origin():
    d = 4
    mu = np.full(d, 0.7)
    model = GaussianMixtureModel(
        [0.5, 0.5], np.stack([mu, -mu]), np.ones((2, d))
    )
    abar = 0.4
    # By symmetry the origin sees exactly one component's density at
    # distance sqrt(abar)*||mu|| (the halves recombine).
    cov_t = abar * 1.0 + (1 - abar)
    oracle = multivariate_normal.logpdf(
        np.zeros(d), np.sqrt(abar) * mu, cov_t * np.eye(d)
    )
    assert model.log_density(np.zeros(d), abar) == pytest.approx(oracle, rel=1e-12)


def test_log_density_against_brute_force(rng):
    model = random_mixture(rng)
    x = rng.normal(size=3)
    for abar in (0.9, 0.3, 0.02):
        assert model.log_density(x, abar) == pytest.approx(
            brute_force_log_density(model, x, abar), rel=1e-10
        )


def test_log_density_full_covariance_against_brute_force(rng):
    model = random_mixture(rng, d=4, full=True)
    x = rng.normal(size=4)
    assert model.log_density(x, 0.35) == pytest.approx(
        brute_force_log_density(model, x, 0.35), rel=1e-10
    )


def test_non_finite_input_rejected():
    model = GaussianMixtureModel.standard(3)
    with pytest.raises(InputError):
        model.log_density(np.array([1.0, np.nan, 0.0]), 0.5)
    with pytest.raises(InputError):
        model.score(np.array([np.inf, 0.0, 0.0]), 0.5)


# ----------------------------------------------------------------------
# score
# ----------------------------------------------------------------------


def test_standard_normal_score_is_negative_x(rng):
    model = GaussianMixtureModel.standard(6)
    x = rng.normal(size=6)
    for abar in (1.0, 0.5, 0.01):
        np.testing.assert_allclose(model.score(x, abar), -x, atol=1e-12)


def test_shifted_gaussian_score(rng):
    mu = rng.normal(size=4)
    model = GaussianMixtureModel.single(mu, 1.0)
    x = rng.normal(size=4)
    abar = 0.6
    # Unit variance stays unit under the forward model; only the mean moves.
    np.testing.assert_allclose(
        model.score(x, abar), -(x - np.sqrt(abar) * mu), atol=1e-12
    )


@pytest.mark.parametrize("full", [False, True])
def test_score_matches_finite_differences(rng, full):
    model = random_mixture(rng, d=3, full=full)
    x = rng.normal(size=3)
    abar = 0.45
    h = 1e-5
    fd = np.array([
        (model.log_density(x + h * e, abar) - model.log_density(x - h * e, abar))
        / (2 * h)
        for e in np.eye(3)
    ])
    assert np.max(np.abs(model.score(x, abar) - fd)) <= 1e-6


def test_score_batched_matches_single(rng):
    model = random_mixture(rng, d=4, K=3)
    X = rng.normal(size=(7, 4))
    batched = model.score(X, 0.3)
    for i in range(7):
        np.testing.assert_allclose(batched[i], model.score(X[i], 0.3), rtol=1e-13)


def test_posterior_rows_sum_to_one(rng):
    model = random_mixture(rng, d=3, K=4)
    X = rng.normal(size=(5, 3))
    post = model.posterior(X, 0.2)
    np.testing.assert_allclose(post.sum(axis=-1), 1.0, atol=1e-12)


# ----------------------------------------------------------------------
# hessian
# ----------------------------------------------------------------------


def test_standard_normal_hessian_is_negative_identity():
    model = GaussianMixtureModel.standard(4)
    x = np.array([0.3, -1.2, 0.0, 2.0])
    for abar in (1.0, 0.4, 0.01):
        np.testing.assert_allclose(model.hessian(x, abar), -np.eye(4), atol=1e-12)


def test_hessian_symmetry(rng):
    model = random_mixture(rng, d=5, K=3)
    for _ in range(4):
        H = model.hessian(rng.normal(size=5), 0.3)
        assert np.max(np.abs(H - H.T)) <= 1e-12


@pytest.mark.parametrize("full", [False, True])
def test_hessian_matches_score_differences(rng, full):
    model = random_mixture(rng, d=3, full=full)
    x = rng.normal(size=3)
    abar = 0.45
    h = 1e-5
    fd = np.column_stack([
        (model.score(x + h * e, abar) - model.score(x - h * e, abar)) / (2 * h)
        for e in np.eye(3)
    ])
    assert np.max(np.abs(model.hessian(x, abar) - fd)) <= 1e-5


def test_hessian_norm_bound_dominates_samples(rng):
    model = GaussianMixtureModel(
        [0.4, 0.6],
        rng.normal(size=(2, 3)),
        np.full((2, 3), 0.5),
        labels=["a", "b"],
    )
    for abar in (0.9, 0.4, 0.05):
        bound = model.hessian_norm_bound(abar)
        for _ in range(12):
            x = 3.0 * rng.normal(size=3)
            H = model.hessian(x, abar)
            assert np.linalg.norm(H, 2) <= bound + 1e-9


def test_hessian_norm_bound_requires_shared_covariance(rng):
    model = random_mixture(rng)  # distinct random covariances
    with pytest.raises(InputError):
        model.hessian_norm_bound(0.5)


# ----------------------------------------------------------------------
# guidance
# ----------------------------------------------------------------------


def labeled_mixture(rng):
    return random_mixture(rng, d=3, K=4, labels=["a", "a", "b", "b"])


def test_cfg_gamma_zero_collapses_to_unconditional(rng):
    model = labeled_mixture(rng)
    x = rng.normal(size=3)
    out = model.cfg_score(x, 0.4, CfgSpec(gamma=0.0, condition="a"))
    np.testing.assert_array_equal(out, model.score(x, 0.4))


def test_cfg_gamma_one_collapses_to_conditional(rng):
    model = labeled_mixture(rng)
    x = rng.normal(size=3)
    out = model.cfg_score(x, 0.4, CfgSpec(gamma=1.0, condition="b"))
    np.testing.assert_array_equal(out, model.conditional("b").score(x, 0.4))


def test_cfg_gamma_two_combination(rng):
    model = labeled_mixture(rng)
    x = rng.normal(size=3)
    # Evaluate both sides independently.
    s_null = model.score(x, 0.4)
    s_cond = model.conditional("a").score(x, 0.4)
    out = model.cfg_score(x, 0.4, CfgSpec(gamma=2.0, condition="a"))
    np.testing.assert_allclose(out, 2.0 * s_cond - s_null, rtol=1e-12)


def test_cfg_unknown_condition(rng):
    model = labeled_mixture(rng)
    with pytest.raises(InputError):
        model.cfg_score(np.zeros(3), 0.4, CfgSpec(gamma=1.0, condition="zzz"))
    plain = random_mixture(rng)
    with pytest.raises(InputError):
        plain.cfg_score(np.zeros(3), 0.4, CfgSpec(gamma=1.0, condition="a"))


def test_cfg_negative_gamma_rejected():
    with pytest.raises(InputError):
        CfgSpec(gamma=-0.5, condition="a")


# ----------------------------------------------------------------------
# construction
# ----------------------------------------------------------------------


def test_weights_must_sum_to_one():
    with pytest.raises(InputError):
        GaussianMixtureModel([0.5, 0.6], np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(InputError):
        GaussianMixtureModel([1.2, -0.2], np.zeros((2, 2)), np.ones((2, 2)))


def test_full_covariance_must_be_spd():
    bad = np.array([[[1.0, 2.0], [2.0, 1.0]]])  # indefinite
    with pytest.raises(InputError):
        GaussianMixtureModel([1.0], np.zeros((1, 2)), bad)
    asym = np.array([[[1.0, 0.3], [0.1, 1.0]]])
    with pytest.raises(InputError):
        GaussianMixtureModel([1.0], np.zeros((1, 2)), asym)


def test_full_dimension_cap():
    d = GaussianMixtureModel.MAX_FULL_DIM + 1
    with pytest.raises(InputError):
        GaussianMixtureModel([1.0], np.zeros((1, d)), np.eye(d)[None])


def test_diag_full_equivalence(rng):
    means = rng.normal(size=(2, 3))
    var = 0.5 + rng.uniform(size=(2, 3))
    diag_model = GaussianMixtureModel([0.3, 0.7], means, var)
    full_model = GaussianMixtureModel(
        [0.3, 0.7], means, np.stack([np.diag(v) for v in var])
    )
    x = rng.normal(size=3)
    assert diag_model.log_density(x, 0.3) == pytest.approx(
        full_model.log_density(x, 0.3), rel=1e-12
    )
    np.testing.assert_allclose(
        diag_model.score(x, 0.3), full_model.score(x, 0.3), rtol=1e-10, atol=1e-12
    )
