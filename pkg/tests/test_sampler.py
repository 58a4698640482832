import numpy as np
import pytest

from ccslab import (
    InputError,
    InversionError,
    NoiseSchedule,
    ddim_invert,
    ddim_sample,
    ddim_sample_batch,
    ddim_step,
    jacobian_propagate,
    lipschitz_product_bound,
    ode_integrate,
    testbeds,
)
from ccslab.sampler import Trajectory


def test_single_gaussian_step_closed_form():
    # Ladder containing the worked coefficient pair (0.95, 0.9).
    sched = NoiseSchedule.explicit([0.9999, 0.95, 0.9, 0.009])
    model = testbeds.single_gaussian_model(2)
    out = ddim_step(sched, model, np.array([1.0, 0.0]), t=2)
    np.testing.assert_allclose(out, [0.9953727785640013, 0.0], rtol=1e-12)


def test_equal_noise_step_is_identity():
    # eta = 1 and lambda = 0 make the update a no-op regardless of the score.
    from ccslab import ddim_coeffs_from_pair

    eta, lam = ddim_coeffs_from_pair(0.5, 0.5)
    x = np.array([2.0, -1.0])
    score = np.array([100.0, 100.0])
    np.testing.assert_array_equal(eta * x + lam * score, x)


def test_step_matches_raw_noise_prediction_form(schedule, mixture, rng):
    # The (eta, lambda) update must agree with the raw one-step formula
    # written in terms of the noise prediction -sqrt(1-abar) * score.
    x = rng.standard_normal(mixture.d)
    for t in (1, 17, 50):
        ab_p, ab_c = schedule.alpha_bar[t - 1], schedule.alpha_bar[t]
        score = mixture.score(x, ab_c)
        eps = -np.sqrt(1 - ab_c) * score
        raw = np.sqrt(ab_p) * (x - np.sqrt(1 - ab_c) * eps) / np.sqrt(ab_c)
        raw += np.sqrt(1 - ab_p) * eps
        np.testing.assert_allclose(
            ddim_step(schedule, mixture, x, t), raw, rtol=1e-12
        )


def test_chain_endpoint_is_scalar_product(schedule, single_gaussian, rng):
    # Product-of-scalars oracle for the exactly linear model.
    x_T = rng.standard_normal(single_gaussian.d)
    traj = ddim_sample(schedule, single_gaussian, x_T)
    factor = np.prod([
        schedule.single_gaussian_step_factor(t) for t in range(1, schedule.T + 1)
    ])
    np.testing.assert_allclose(traj.endpoint, factor * x_T, rtol=1e-12)


def test_symmetric_mixture_fixed_point_at_zero(schedule, mixture):
    traj = ddim_sample(schedule, mixture, np.zeros(mixture.d))
    np.testing.assert_allclose(traj.endpoint, 0.0, atol=1e-12)


def test_trajectory_bookkeeping(schedule, mixture, rng):
    traj = ddim_sample(schedule, mixture, rng.standard_normal(mixture.d))
    assert traj.states.shape == (schedule.T + 1, mixture.d)
    assert traj.timesteps[0] == schedule.T and traj.timesteps[-1] == 0
    np.testing.assert_array_equal(traj.endpoint, traj.states[-1])


def test_trajectory_invariants():
    with pytest.raises(InputError):
        Trajectory(np.zeros((3, 2)), np.array([2, 1]), "generation")
    with pytest.raises(InputError):
        Trajectory(np.zeros((2, 2)), np.array([1, 2]), "generation")
    with pytest.raises(InputError):
        Trajectory(np.zeros((2, 2)), np.array([2, 1]), "sideways")


def test_determinism_bit_identical(schedule, mixture, rng):
    x = rng.standard_normal(mixture.d)
    a = ddim_sample(schedule, mixture, x)
    b = ddim_sample(schedule, mixture, x)
    assert np.array_equal(a.states, b.states)


def test_batch_matches_single_chains(schedule, mixture, rng):
    X = rng.standard_normal((5, mixture.d))
    batch = ddim_sample_batch(schedule, mixture, X)
    for i in range(5):
        single = ddim_sample(schedule, mixture, X[i]).endpoint
        np.testing.assert_allclose(batch[i], single, rtol=1e-9, atol=1e-12)


def test_batch_partial_start(schedule, mixture, rng):
    X = rng.standard_normal((3, mixture.d))
    batch = ddim_sample_batch(schedule, mixture, X, t_start=20)
    for i in range(3):
        single = ddim_sample(schedule, mixture, X[i], t_start=20).endpoint
        np.testing.assert_allclose(batch[i], single, rtol=1e-9, atol=1e-12)


def test_batch_guided_matches_stepwise(schedule, mixture, rng):
    from ccslab import CfgSpec

    cfg = CfgSpec(gamma=2.5, condition="a")
    X = rng.standard_normal((3, mixture.d))
    batch = ddim_sample_batch(schedule, mixture, X, cfg=cfg)
    x = X[1]
    for t in range(schedule.T, 0, -1):
        x = ddim_step(schedule, mixture, x, t, cfg)
    np.testing.assert_allclose(batch[1], x, rtol=1e-9, atol=1e-12)


# ----------------------------------------------------------------------
# inversion
# ----------------------------------------------------------------------


def test_inversion_t_stop_zero_is_identity(schedule, mixture, rng):
    x0 = rng.standard_normal(mixture.d)
    np.testing.assert_array_equal(ddim_invert(schedule, mixture, x0, 0), x0)


def test_refined_inversion_round_trip_linear_model(schedule, single_gaussian, rng):
    # The linear chain inverts exactly once per-step refinement converges.
    x0 = rng.standard_normal(single_gaussian.d)
    x_T = ddim_invert(schedule, single_gaussian, x0, schedule.T, refine_iters=40)
    back = ddim_sample(schedule, single_gaussian, x_T).endpoint
    assert np.linalg.norm(back - x0) <= 1e-10


def test_first_order_inversion_error_shrinks_with_steps(mixture):
    target = testbeds.draw_targets(mixture, 1, 3)[0]
    errors = []
    for steps in (50, 100, 200):
        sched = testbeds.default_schedule(steps)
        x_top = ddim_invert(sched, mixture, target, sched.T)
        back = ddim_sample(sched, mixture, x_top).endpoint
        errors.append(np.linalg.norm(back - target))
    assert errors[0] > errors[1] > errors[2]


def test_partial_inversion_round_trip(schedule, mixture, rng):
    x0 = testbeds.draw_targets(mixture, 1, 9)[0]
    z = ddim_invert(schedule, mixture, x0, 30, refine_iters=40)
    back = ddim_sample(schedule, mixture, z, t_start=30).endpoint
    assert np.linalg.norm(back - x0) <= 1e-8


def test_inversion_divergence_reports_step(schedule):
    class ExplosiveScore:
        d = 2

        def cfg_score(self, x, abar, cfg=None):
            return 1e6 * np.asarray(x) ** 3

    with pytest.raises(InversionError) as excinfo:
        ddim_invert(schedule, ExplosiveScore(), np.array([1.0, 1.0]), 5,
                    refine_iters=25)
    assert excinfo.value.step is not None


def test_inversion_rejects_bad_arguments(schedule, mixture):
    with pytest.raises(InputError):
        ddim_invert(schedule, mixture, np.zeros(mixture.d), schedule.T + 1)
    with pytest.raises(InputError):
        ddim_invert(schedule, mixture, np.zeros(mixture.d), 5, refine_iters=-1)


# ----------------------------------------------------------------------
# probability-flow integration
# ----------------------------------------------------------------------


def test_ode_identity_on_standard_normal(schedule, rng):
    # The standard normal is a fixed point of the forward model, so the
    # exact flow is the identity map; the dense solver must recover it.
    model = testbeds.single_gaussian_model(16)
    x_T = rng.standard_normal(16)
    out = ode_integrate(schedule, model, x_T, n_grid=2048, method="rk4")
    assert np.linalg.norm(out - x_T) <= 1e-5 * np.linalg.norm(x_T)


def test_ode_symmetric_mixture_zero_fixed_point(schedule, mixture):
    out = ode_integrate(schedule, mixture, np.zeros(mixture.d), 128, "rk4")
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


def test_euler_first_order_convergence(schedule, rng):
    model = testbeds.mixture_model(8)
    x = 2.0 * rng.standard_normal(8)
    ref = ode_integrate(schedule, model, x, 8192, "rk4")
    errs = [
        np.linalg.norm(ode_integrate(schedule, model, x, n, "euler") - ref)
        for n in (512, 1024, 2048)
    ]
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    for r in ratios:
        assert 1.6 < r < 2.4, f"expected ~2x per doubling, got {r}"


def test_rk4_fourth_order_convergence(schedule, rng):
    model = testbeds.mixture_model(8)
    x = 2.0 * rng.standard_normal(8)
    ref = ode_integrate(schedule, model, x, 16384, "rk4")
    errs = [
        np.linalg.norm(ode_integrate(schedule, model, x, n, "rk4") - ref)
        for n in (512, 1024, 2048)
    ]
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    # Asymptotically ~16x per doubling; keep bounds generous.
    for r in ratios:
        assert 8.0 < r < 40.0, f"expected ~16x per doubling, got {r}"


def test_ode_argument_validation(schedule, mixture):
    with pytest.raises(InputError):
        ode_integrate(schedule, mixture, np.zeros(mixture.d), 1)
    with pytest.raises(InputError):
        ode_integrate(schedule, mixture, np.zeros(mixture.d), 64, method="heun")


# ----------------------------------------------------------------------
# sensitivity propagation
# ----------------------------------------------------------------------


def test_sensitivity_scalar_oracle(schedule, rng):
    model = testbeds.single_gaussian_model(8)
    x_T = rng.standard_normal(8)
    x0, gamma0 = jacobian_propagate(schedule, model, x_T)
    factor = schedule.single_gaussian_chain_factor()
    np.testing.assert_allclose(gamma0, factor * np.eye(8), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(x0, ddim_sample(schedule, model, x_T).endpoint,
                               rtol=1e-12)


def test_sensitivity_matches_central_differences(schedule, rng):
    model = testbeds.mixture_model(16)
    x_T = rng.standard_normal(16)
    x0, gamma0 = jacobian_propagate(schedule, model, x_T)
    lam = 1e-3
    for _ in range(3):
        delta = rng.standard_normal(16)
        delta /= np.linalg.norm(delta)
        fp = ddim_sample(schedule, model, x_T + lam * delta).endpoint
        fm = ddim_sample(schedule, model, x_T - lam * delta).endpoint
        fd = (fp - fm) / (2 * lam)
        ref = gamma0 @ delta
        assert np.linalg.norm(fd - ref) <= 1e-4 * np.linalg.norm(ref)


def test_zero_direction_produces_zero_change(schedule, mixture, rng):
    x_T = rng.standard_normal(mixture.d)
    a = ddim_sample(schedule, mixture, x_T).endpoint
    b = ddim_sample(schedule, mixture, x_T + 0.0 * x_T).endpoint
    np.testing.assert_array_equal(a, b)


def test_sensitivity_dimension_cap(schedule):
    model = testbeds.single_gaussian_model(300)
    with pytest.raises(InputError):
        jacobian_propagate(schedule, model, np.zeros(300), max_dim=256)


def test_exact_linearity_of_linear_chain(schedule, rng):
    # Perturbation response of the linear model has zero remainder.
    model = testbeds.single_gaussian_model(12)
    factor = schedule.single_gaussian_chain_factor()
    x = rng.standard_normal(12)
    base = ddim_sample(schedule, model, x).endpoint
    for lam in (1e-3, 0.1, 2.0):
        delta = rng.standard_normal(12)
        out = ddim_sample(schedule, model, x + lam * delta).endpoint
        expected = abs(lam) * factor * np.linalg.norm(delta)
        assert abs(np.linalg.norm(out - base) - expected) <= 1e-10 * expected


def test_growth_bounded_by_lipschitz_product(schedule, rng):
    model = testbeds.mixture_model(16)
    bound = lipschitz_product_bound(schedule, model)
    x = 3.0 * rng.standard_normal(16)
    base = ddim_sample(schedule, model, x).endpoint
    for lam in (1e-3, 1e-1, 1.0, 2.0):
        delta = rng.standard_normal(16)
        delta /= np.linalg.norm(delta)
        out = ddim_sample(schedule, model, x + lam * delta).endpoint
        assert np.linalg.norm(out - base) / lam <= bound
