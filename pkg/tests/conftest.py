import hypothesis
import numpy as np
import pytest

from latentroute.irt import CalibrationConfig
from latentroute.simulate import generate_world

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def small_world():
    return generate_world(seed=0, M=12, P=80, D=3)


@pytest.fixture(scope="session")
def small_space(small_world):
    return small_world.planted_space()


@pytest.fixture()
def cal_config():
    return CalibrationConfig(D=3, epochs=500, seed=0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
