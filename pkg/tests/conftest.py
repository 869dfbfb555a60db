import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qlqr import PlantParams, default_weights, linearize, solve_dare

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return PlantParams()


@pytest.fixture(scope="session")
def weights():
    return default_weights()


@pytest.fixture(scope="session")
def model(params):
    return linearize(params, 0.01)


@pytest.fixture(scope="session")
def oracle(model, weights):
    return solve_dare(model, weights)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
