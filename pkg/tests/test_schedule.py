import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccslab import InputError, NoiseSchedule, ddim_coeffs_from_pair
from ccslab.schedule import ladder_violations


def test_default_ladder_shape(schedule):
    ab = schedule.alpha_bar
    assert ab.size == schedule.T + 1 == 51
    assert ladder_violations(ab) == []
    assert ab[0] >= 0.999
    assert ab[-1] <= 0.01


def test_subsample_preserves_base_endpoints(schedule):
    base = schedule.base_alpha_bar
    assert schedule.alpha_bar[0] == base[0]
    assert schedule.alpha_bar[-1] == base[-1]


def test_alpha_bar_at_integer_endpoints(schedule):
    assert schedule.alpha_bar_at(0) == schedule.alpha_bar[0]
    assert schedule.alpha_bar_at(schedule.T) == schedule.alpha_bar[-1]
    for t in (1, 7, 25, 49):
        assert schedule.alpha_bar_at(t) == schedule.alpha_bar[t]


def test_alpha_bar_at_midpoints_bracketed(schedule):
    # Monotone interpolation: the half-step value sits strictly between the
    # neighboring ladder values.
    for k in (0, 3, 24, 49):
        mid = schedule.alpha_bar_at(k + 0.5)
        assert schedule.alpha_bar[k + 1] < mid < schedule.alpha_bar[k]


def test_alpha_bar_at_domain_error(schedule):
    with pytest.raises(InputError):
        schedule.alpha_bar_at(-0.1)
    with pytest.raises(InputError):
        schedule.alpha_bar_at(schedule.T + 1e-9)


def test_coeffs_degenerate_equal_noise_step():
    eta, lam = ddim_coeffs_from_pair(0.7, 0.7)
    assert eta == 1.0
    assert lam == pytest.approx(0.0, abs=1e-15)


def test_coeffs_against_closed_forms():
    # Independent evaluation of the two closed-form expressions.
    ab_prev, ab_cur = 0.95, 0.9
    eta, lam = ddim_coeffs_from_pair(ab_prev, ab_cur)
    eta_oracle = np.sqrt(ab_prev / ab_cur)
    lam_oracle = np.sqrt(ab_prev / ab_cur) * (1 - ab_cur) - np.sqrt(
        (1 - ab_prev) * (1 - ab_cur)
    )
    assert eta == pytest.approx(eta_oracle, rel=1e-14)
    assert lam == pytest.approx(lam_oracle, rel=1e-14)
    assert eta == pytest.approx(1.02740, abs=5e-6)
    assert lam == pytest.approx(0.03203, abs=5e-6)


def test_combined_single_gaussian_coefficient():
    # eta - lambda collapses algebraically for a unit-variance linear score.
    ab_prev, ab_cur = 0.95, 0.9
    eta, lam = ddim_coeffs_from_pair(ab_prev, ab_cur)
    oracle = np.sqrt(ab_prev * ab_cur) + np.sqrt((1 - ab_prev) * (1 - ab_cur))
    assert eta - lam == pytest.approx(oracle, rel=1e-12)
    assert eta - lam == pytest.approx(0.995373, abs=5e-7)


def test_coeffs_step_zero_rejected(schedule):
    with pytest.raises(InputError):
        schedule.ddim_coeffs(0)
    with pytest.raises(InputError):
        schedule.ddim_coeffs(schedule.T + 1)


def test_sigma_values():
    sched = NoiseSchedule.explicit([1.0, 0.5, 0.01])
    assert sched.sigma_of(0) == 0.0
    assert sched.sigma_of(1) == pytest.approx(1.0, rel=1e-14)
    assert sched.sigma_of(2) == pytest.approx(np.sqrt(99.0), rel=1e-12)


def test_sigma_increasing_alpha_decreasing(schedule):
    sig = np.array([schedule.sigma_of(t) for t in range(schedule.T + 1)])
    assert np.all(np.diff(sig) > 0)
    assert np.all(np.diff(schedule.alpha_bar) < 0)


def test_eps_coeff_small_at_early_steps(schedule):
    # The noise-prediction coefficient vanishes toward t = 1 at the
    # generating resolution of the ladder.
    base = schedule.base_resolution()
    assert abs(base.eps_coeff(1)) < 1e-2
    assert abs(base.eps_coeff(1)) < abs(base.eps_coeff(base.T))


def test_coeffs_reproduce_expanded_update(schedule, rng):
    # eta_t x + lambda_t g must equal the expanded one-step expression.
    x = rng.standard_normal(6)
    g = rng.standard_normal(6)
    for t in range(1, schedule.T + 1):
        ab_p, ab_c = schedule.alpha_bar[t - 1], schedule.alpha_bar[t]
        eta, lam = schedule.ddim_coeffs(t)
        expanded = np.sqrt(ab_p) * (x + (1 - ab_c) * g) / np.sqrt(ab_c)
        expanded -= np.sqrt((1 - ab_p) * (1 - ab_c)) * g
        np.testing.assert_allclose(eta * x + lam * g, expanded, rtol=1e-12)


def test_ladder_validation_rejects_bad_input():
    with pytest.raises(InputError):
        NoiseSchedule.explicit([0.9999, 0.5, 0.5, 0.009])  # not strictly decreasing
    with pytest.raises(InputError):
        NoiseSchedule.explicit([0.9999, 1.5, 0.009])  # outside (0, 1]
    with pytest.raises(InputError):
        NoiseSchedule.explicit([0.9, 0.5, 0.009])  # starts too noisy
    with pytest.raises(InputError):
        NoiseSchedule.explicit([0.9999, 0.5, 0.2])  # ends too clean
    with pytest.raises(InputError):
        NoiseSchedule.linear(ddim_steps=1000, base_steps=1000)


# Ramp ranges that respect the endpoint policy: the first step must stay
# nearly clean (beta_start <= 1e-3) and the cumulative product must decay
# below 0.01 (mean beta * base_steps >= ln 100).
@settings(max_examples=25, deadline=None)
@given(
    beta_start=st.floats(1e-5, 1e-3),
    beta_end=st.floats(0.012, 0.05),
    ddim_steps=st.integers(5, 200),
)
def test_linear_ladders_are_always_sound(beta_start, beta_end, ddim_steps):
    sched = NoiseSchedule.linear(
        beta_start=beta_start, beta_end=beta_end,
        base_steps=1000, ddim_steps=ddim_steps,
    )
    assert ladder_violations(sched.alpha_bar) == []
    sig = sched.sigma_of(np.linspace(0, sched.T, 101))
    assert np.all(np.diff(sig) > 0)
