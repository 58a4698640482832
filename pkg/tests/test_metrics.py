import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccslab import InputError, SampleBatch, psnr_of_mean, r_squared, rmse, sample_sd
from ccslab.metrics import linear_fit


def make_batch(samples, target):
    samples = np.asarray(samples, dtype=float)
    return SampleBatch(
        mechanism="ccs_full",
        target=np.asarray(target, dtype=float),
        scale=0.1,
        seed=0,
        samples=samples,
        draw_seeds=np.zeros(samples.shape[0], dtype=np.uint64),
        start_norms=np.ones(samples.shape[0]),
        anchor_norm=1.0,
    )


def test_rmse_zero_on_equal():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0


def test_rmse_unit_per_coordinate():
    assert rmse(np.ones(4), np.zeros(4)) == pytest.approx(1.0, rel=1e-15)


def test_rmse_direct_value():
    # ||(3,4)|| / sqrt(2) = 5 / sqrt(2)
    assert rmse([3.0, 4.0], [0.0, 0.0]) == pytest.approx(5 / np.sqrt(2), rel=1e-14)


def test_rmse_length_mismatch():
    with pytest.raises(InputError):
        rmse([1.0, 2.0], [1.0])


def test_psnr_exact_match_is_infinite():
    batch = make_batch([[1.0, 2.0], [1.0, 2.0]], [1.0, 2.0])
    assert psnr_of_mean(batch, [1.0, 2.0]) == float("inf")


def test_psnr_zero_db_at_full_range_error():
    target = np.zeros(3)
    batch = make_batch([2.0 * np.ones(3)], target)
    assert psnr_of_mean(batch, target, data_range=2.0) == pytest.approx(0.0, abs=1e-12)


def test_psnr_forty_db():
    # data_range 2 with mean error 0.02 per coordinate.
    target = np.zeros(4)
    batch = make_batch([0.02 * np.ones(4)], target)
    assert psnr_of_mean(batch, target, data_range=2.0) == pytest.approx(40.0, rel=1e-12)


def test_psnr_validation():
    batch = make_batch([[1.0, 1.0]], [0.0, 0.0])
    with pytest.raises(InputError):
        psnr_of_mean(batch, [0.0, 0.0], data_range=0.0)


def test_sample_sd_constant_draws():
    batch = make_batch([[0.5, 0.5, 0.5], [-1.0, -1.0, -1.0]], np.zeros(3))
    assert sample_sd(batch) == 0.0


def test_sample_sd_two_point_population_convention():
    batch = make_batch([[1.0, -1.0]], np.zeros(2))
    assert sample_sd(batch) == pytest.approx(1.0, rel=1e-15)


def test_sample_sd_against_brute_force(rng):
    samples = rng.normal(size=(6, 9))
    batch = make_batch(samples, np.zeros(9))
    oracle = np.mean([
        np.sqrt(np.mean((row - row.mean()) ** 2)) for row in samples
    ])
    assert sample_sd(batch) == pytest.approx(oracle, rel=1e-12)


def test_fit_recovers_exact_line():
    x = np.sin(np.linspace(0.05, 0.9, 8))
    y = 2.0 * x + 0.1
    a, b = linear_fit(x, y)
    assert a == pytest.approx(2.0, rel=1e-12)
    assert b == pytest.approx(0.1, rel=1e-10)
    assert r_squared(x, y) == pytest.approx(1.0, abs=1e-12)


def test_fit_degenerate_abscissae():
    with pytest.raises(InputError):
        linear_fit(np.ones(5), np.arange(5.0))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 40))
def test_r_squared_always_in_unit_interval(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    if np.ptp(x) == 0.0:
        x[0] += 1.0
    y = rng.normal(size=n)
    assert 0.0 <= r_squared(x, y) <= 1.0
