import numpy as np
import pytest

from ccslab import testbeds


@pytest.fixture(scope="session")
def schedule():
    return testbeds.default_schedule()


@pytest.fixture(scope="session")
def mixture():
    return testbeds.mixture_model()


@pytest.fixture(scope="session")
def single_gaussian():
    return testbeds.single_gaussian_model()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
